//! End-to-end checks of the binary: exit codes, config diagnostics, and
//! byte-exact reproducibility across seeds and thread counts.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bpdl"))
}

const SMALL_CONFIG: &str = r#"
[domain]
mode = "torus"
dimension = 1
side = 10.0

[rates]
gamma = 4.0
mu = 1.0
alpha = 1.0

[kernels.dispersal]
shape = "tophat"
radius = 1.0
mass = 1.0

[kernels.competition]
shape = "tophat"
radius = 0.5
mass = 1.0

[initial]
kind = "uniform_iid"
count = 10

[run]
t_end = 2.0
replicates = 6
engine = "faithful"
snapshot_dt = 0.5
record_positions = true
seed = 3
"#;

fn tmpdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("bpdl-cli-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_config_flag_exits_2() {
    let out = bin().args(["simulate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unparsable_config_exits_2_with_location() {
    let dir = tmpdir("parse");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[domain\nmode = 1").unwrap();
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("line"), "{err}");
}

#[test]
fn missing_kernel_field_is_named() {
    let dir = tmpdir("field");
    let cfg = dir.join("missing.toml");
    std::fs::write(&cfg, SMALL_CONFIG.replace("radius = 1.0\n", "")).unwrap();
    let out = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel.radius"), "{err}");
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let dir = tmpdir("unknown");
    let out = bin()
        .args(["experiment", "frobnicate", "--preset", "slivnyak", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stationarity") && err.contains("lattice-survival"), "{err}");
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .filter(|(name, _)| name != "manifest.json")
        .collect();
    files.sort();
    files
}

#[test]
fn identical_runs_are_byte_identical_across_thread_counts() {
    let dir = tmpdir("repro");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let mut outs = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "2"), ("c", "3")] {
        let out_dir = dir.join(sub);
        let status = bin()
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "42",
                "--threads",
                threads,
                "--out",
            ])
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        outs.push(read_outputs(&out_dir));
    }
    assert_eq!(outs[0], outs[1], "seed-identical runs must produce identical bytes");
    assert_eq!(outs[0], outs[2], "thread count must not change any output");
    // while a different seed must not
    let out_dir = dir.join("d");
    bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "43", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_ne!(outs[0], read_outputs(&out_dir));
}

#[test]
fn manifest_digests_match_outputs() {
    let dir = tmpdir("digest");
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let out_dir = dir.join("out");
    assert!(bin()
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(&out_dir)
        .status()
        .unwrap()
        .success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("trace.csv"));
    assert!(outputs.contains_key("positions.csv"));
    for (name, digest) in outputs {
        let bytes = std::fs::read(out_dir.join(name)).unwrap();
        assert_eq!(
            bpdl::manifest::digest_hex(&bytes),
            digest.as_str().unwrap(),
            "digest mismatch for {name}"
        );
    }
}

#[test]
fn meanfield_preset_passes_and_reports() {
    let dir = tmpdir("mf");
    let out = bin()
        .args(["meanfield", "--preset", "logistic-oracle", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("\"pass\": true"), "{report}");
}

#[test]
fn presets_listing_includes_known_names() {
    let out = bin().args(["presets"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["fig1", "martingale", "scaling-c1", "lattice-survival"] {
        assert!(text.contains(name), "missing preset {name}");
    }
}
