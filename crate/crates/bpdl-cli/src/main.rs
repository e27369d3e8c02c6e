//! Command-line interface: config-driven simulation runs, mean-field
//! studies, and named experiments with reproducible outputs.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 a run-level pass flag
//! came back false.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bpdl::config::{preset, preset_text, ConfigError, RunConfig, PRESETS};
use bpdl::experiments::{run_named, ExperimentError, ExperimentOutcome};
use bpdl::manifest::RunManifest;
use bpdl::meanfield::{DensityField, GridSpec, Solver};
use bpdl::stats;
use bpdl::trace::{fmt_f64, write_positions_csv, write_trace_csv, Trace};

#[derive(Parser)]
#[command(name = "bpdl", version, about = "Spatial birth-death process simulator and toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named built-in preset.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (also BPDL_THREADS); results are thread-count independent.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicate fleet of the stochastic simulator.
    Simulate(CommonArgs),
    /// Run a mean-field solver study.
    Meanfield(CommonArgs),
    /// Run a named experiment (see `bpdl experiment --help` for names).
    Experiment {
        /// One of: scaling-c1, scaling-c2, stationarity, slivnyak,
        /// extinction, lattice-survival.
        name: String,
        #[command(flatten)]
        common: CommonArgs,
        /// Enable the long-running studies (scaling-c2).
        #[arg(long)]
        expensive: bool,
    },
    /// List built-in presets, or print one with `--show NAME`.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Experiment(ExperimentError),
    Sim(bpdl::SimError),
    MeanField(bpdl::meanfield::MeanFieldError),
    Io(std::io::Error),
    Stats(bpdl::stats::StatsError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Experiment(e) => write!(f, "{e}"),
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::MeanField(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Stats(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Experiment(ExperimentError::Config(_))
            | CliError::Experiment(ExperimentError::Missing(_))
            | CliError::Experiment(ExperimentError::UnknownExperiment(..)) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}
impl From<bpdl::SimError> for CliError {
    fn from(e: bpdl::SimError) -> Self {
        CliError::Sim(e)
    }
}
impl From<bpdl::meanfield::MeanFieldError> for CliError {
    fn from(e: bpdl::meanfield::MeanFieldError) -> Self {
        CliError::MeanField(e)
    }
}
impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
impl From<bpdl::stats::StatsError> for CliError {
    fn from(e: bpdl::stats::StatsError) -> Self {
        CliError::Stats(e)
    }
}

fn init_threads(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var("BPDL_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(common: &CommonArgs) -> Result<(RunConfig, String), CliError> {
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)?;
        let cfg = RunConfig::parse(&text)?;
        Ok((cfg, text))
    } else if let Some(name) = &common.preset {
        let cfg = preset(name)?;
        let text = preset_text(name).unwrap().to_string();
        Ok((cfg, text))
    } else {
        Err(CliError::Config(ConfigError::Missing("--config or --preset")))
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Simulate(common) => {
            init_threads(common.threads);
            let (cfg, text) = load_config(&common)?;
            simulate(&cfg, &text, &common)
        }
        Command::Meanfield(common) => {
            init_threads(common.threads);
            let (cfg, text) = load_config(&common)?;
            meanfield(&cfg, &text, &common)
        }
        Command::Experiment { name, common, expensive } => {
            init_threads(common.threads);
            let (cfg, text) = load_config(&common)?;
            experiment(&name, &cfg, &text, &common, expensive)
        }
        Command::Presets { show } => {
            match show {
                Some(name) => match preset_text(&name) {
                    Some(text) => println!("{text}"),
                    None => {
                        eprintln!("unknown preset '{name}'");
                        return Ok(ExitCode::from(2));
                    }
                },
                None => {
                    for (name, _) in PRESETS {
                        println!("{name}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_out(
    dir: &Path,
    manifest: &mut RunManifest,
    name: &str,
    contents: &str,
) -> Result<(), CliError> {
    std::fs::write(dir.join(name), contents)?;
    manifest.add_output(name, contents.as_bytes());
    Ok(())
}

fn simulate(cfg: &RunConfig, text: &str, common: &CommonArgs) -> Result<ExitCode, CliError> {
    std::fs::create_dir_all(&common.out)?;
    let spec = cfg.replicate_spec(common.seed)?;
    let mut manifest = RunManifest::start("simulate", spec.master_seed, text);
    let traces = spec.run_all()?;

    let mut trace_csv = Vec::new();
    write_trace_csv(&traces, &mut trace_csv)?;
    let trace_csv = String::from_utf8(trace_csv).unwrap();
    write_out(&common.out, &mut manifest, "trace.csv", &trace_csv)?;

    if spec.plan.record_positions {
        let mut pos_csv = Vec::new();
        write_positions_csv(&traces, &mut pos_csv)?;
        let pos_csv = String::from_utf8(pos_csv).unwrap();
        write_out(&common.out, &mut manifest, "positions.csv", &pos_csv)?;
    }

    let mut plots: Vec<String> = Vec::new();
    write_out(&common.out, &mut manifest, "counts.dat", &count_series(&traces))?;
    plots.push(plot_block("counts", "time", "population count", "counts.dat"));

    if spec.plan.count_radius.is_some() {
        write_out(&common.out, &mut manifest, "window_count.dat", &scalar_series(&traces, |s| {
            s.window_count.map(|c| c as f64)
        })?)?;
        plots.push(plot_block("window_count", "time", "count in window", "window_count.dat"));
    }
    if spec.plan.load_radius.is_some() {
        write_out(&common.out, &mut manifest, "load.dat", &scalar_series(&traces, |s| s.load)?)?;
        plots.push(plot_block("load", "time", "interaction load", "load.dat"));
    }
    if spec.plan.record_positions {
        for snap_t in snapshot_times_with_positions(&traces) {
            let (name, data, csv) = density_outputs(&traces, snap_t, &spec.params.domain)?;
            write_out(&common.out, &mut manifest, &format!("{name}.dat"), &data)?;
            write_out(&common.out, &mut manifest, &format!("{name}.csv"), &csv)?;
            plots.push(plot_block(&name, "position", "intensity", &format!("{name}.dat")));
        }
    }
    write_out(&common.out, &mut manifest, "plot.gp", &gnuplot_script(&plots))?;
    manifest.write(&common.out)?;
    println!(
        "simulate: {} replicates, {} snapshots each -> {}",
        traces.len(),
        traces.first().map_or(0, |t| t.snapshots.len()),
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn count_series(traces: &[Trace]) -> String {
    let mut out = String::from("# t mean_count stderr\n");
    if traces.is_empty() {
        return out;
    }
    for k in 0..traces[0].snapshots.len() {
        let t = traces[0].snapshots[k].t;
        let vals: Vec<f64> = traces.iter().map(|tr| tr.snapshots[k].count as f64).collect();
        let (mean, se) = mean_se(&vals);
        out.push_str(&format!("{} {} {}\n", fmt_f64(t), fmt_f64(mean), fmt_f64(se)));
    }
    out
}

fn scalar_series(
    traces: &[Trace],
    get: impl Fn(&bpdl::trace::Snapshot) -> Option<f64>,
) -> Result<String, CliError> {
    let mut out = String::from("# t mean stderr\n");
    for k in 0..traces[0].snapshots.len() {
        let t = traces[0].snapshots[k].t;
        let vals: Vec<f64> = traces
            .iter()
            .map(|tr| get(&tr.snapshots[k]).unwrap_or(f64::NAN))
            .collect();
        let (mean, se) = mean_se(&vals);
        out.push_str(&format!("{} {} {}\n", fmt_f64(t), fmt_f64(mean), fmt_f64(se)));
    }
    Ok(out)
}

fn snapshot_times_with_positions(traces: &[Trace]) -> Vec<f64> {
    traces
        .first()
        .map(|tr| {
            tr.snapshots.iter().filter(|s| s.positions.is_some()).map(|s| s.t).collect()
        })
        .unwrap_or_default()
}

fn density_outputs(
    traces: &[Trace],
    t: f64,
    domain: &bpdl::SpatialDomain,
) -> Result<(String, String, String), CliError> {
    let half = match domain {
        bpdl::SpatialDomain::Torus { side, .. } => side / 2.0,
        _ => 10.0,
    };
    let n_bins = (2.0 * half).round() as usize;
    let edges: Vec<f64> =
        (0..=n_bins).map(|k| -half + k as f64 * (2.0 * half) / n_bins as f64).collect();
    let hist = stats::density_histogram(traces, t, &edges)?;
    // plot-ready whitespace data plus the estimator CSV (t, bin, value, stderr)
    let mut dat = String::from("# bin_center intensity stderr\n");
    let mut csv = String::from("t,bin,value,stderr\n");
    for bin in &hist {
        dat.push_str(&format!(
            "{} {} {}\n",
            fmt_f64(bin.left + bin.width / 2.0),
            fmt_f64(bin.intensity),
            fmt_f64(bin.stderr)
        ));
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(bin.left),
            fmt_f64(bin.intensity),
            fmt_f64(bin.stderr)
        ));
    }
    Ok((format!("density_t{t}"), dat, csv))
}

fn plot_block(name: &str, xlabel: &str, ylabel: &str, file: &str) -> String {
    format!(
        "set output '{name}.png'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nplot '{file}' using 1:2 with lines title '{name}', \\\n     '{file}' using 1:($2-3*$3):($2+3*$3) with filledcurves fs transparent solid 0.15 notitle\n"
    )
}

fn gnuplot_script(blocks: &[String]) -> String {
    let mut out = String::from("# generated plotting script; run: gnuplot plot.gp\nset terminal pngcairo size 1000,640\nset grid\n");
    for b in blocks {
        out.push_str(b);
        out.push('\n');
    }
    out
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mf_initial_field(cfg: &RunConfig, solver: &Solver, spec: GridSpec) -> DensityField {
    let mf = cfg.meanfield.as_ref().expect("meanfield section present");
    let side = spec.side;
    let c0 = solver.c0();
    let amp = mf.amplitude.unwrap_or(0.0);
    match mf.initial.as_str() {
        "uniform" => DensityField::uniform(spec, mf.initial_value.unwrap_or(1.0)),
        "c0" => DensityField::uniform(spec, c0),
        "sin_perturbed" => DensityField::from_fn(spec, |x| {
            c0 * (1.0 + amp * (std::f64::consts::TAU * x[0] / side).sin())
        }),
        "cos_perturbed" => DensityField::from_fn(spec, |x| {
            c0 + amp * (std::f64::consts::TAU * x[0] / side).cos()
        }),
        other => panic!("unknown meanfield initial '{other}'"),
    }
}

fn meanfield(cfg: &RunConfig, text: &str, common: &CommonArgs) -> Result<ExitCode, CliError> {
    std::fs::create_dir_all(&common.out)?;
    let params = cfg.params()?;
    let mf = cfg
        .meanfield
        .as_ref()
        .ok_or(CliError::Config(ConfigError::Missing("meanfield")))?
        .clone();
    let side = match params.domain {
        bpdl::SpatialDomain::Torus { side, .. } => side,
        _ => return Err(CliError::Config(ConfigError::Invalid(
            "mean-field studies run on a torus domain".into(),
        ))),
    };
    let spec = GridSpec::new_1d(side, mf.grid_n);
    let solver = Solver::new(&params, spec)?;
    let field0 = mf_initial_field(cfg, &solver, spec);
    let mut manifest = RunManifest::start("meanfield", 0, text);
    let mut pass = true;
    let report: serde_json::Value;

    match mf.study.as_str() {
        "integrate" | "logistic_oracle" => {
            let result = solver.integrate(&field0, mf.t_end, mf.dt, mf.out_dt, false)?;
            let mut decay = String::from("# t mass l2_to_c0\n");
            for p in &result.trace {
                decay.push_str(&format!(
                    "{} {} {}\n",
                    fmt_f64(p.t),
                    fmt_f64(p.mass),
                    fmt_f64(p.l2_to_c0)
                ));
            }
            write_out(&common.out, &mut manifest, "masstrace.csv", &decay)?;
            let mut field_csv = String::from("x_1,value\n");
            for (k, v) in result.field.values.iter().enumerate() {
                field_csv.push_str(&format!("{},{}\n", fmt_f64(spec.coord(k)), fmt_f64(*v)));
            }
            write_out(&common.out, &mut manifest, "field_final.csv", &field_csv)?;
            if mf.study == "logistic_oracle" {
                // uniform start: mass follows the logistic closed form
                let n0 = mf.initial_value.unwrap_or(1.0);
                let r = solver.gamma - solver.mu;
                let k = solver.c0();
                let volume = side;
                let expect = bpdl::meanfield::logistic(n0, r, k, mf.t_end);
                let got = result.trace.last().unwrap().mass / volume;
                let err = (got - expect).abs();
                // order-of-convergence probe against the same oracle
                let exact1 = bpdl::meanfield::logistic(n0, r, k, 1.0);
                let e_of = |dt: f64| {
                    solver
                        .integrate(&field0, 1.0, Some(dt), 1.0, false)
                        .map(|res| (res.trace.last().unwrap().mass / volume - exact1).abs())
                };
                let e1 = e_of(0.01)?;
                let e2 = e_of(0.005)?;
                let ratio = e1 / e2;
                pass = err < 1e-6 && (12.0..=20.0).contains(&ratio);
                report = serde_json::json!({
                    "study": "logistic_oracle",
                    "oracle_error": err,
                    "order_ratio": ratio,
                    "pass": pass,
                });
            } else {
                report = serde_json::json!({
                    "study": "integrate",
                    "final_mass": result.trace.last().unwrap().mass,
                    "clipped_mass": result.clipped_mass,
                    "pass": true,
                });
            }
        }
        "dbc_decay" => {
            let r = solver.dbc_pointwise_check(&field0, mf.t_end, mf.out_dt)?;
            pass = r.bound_holds && r.monotone;
            report = serde_json::json!({
                "study": "dbc_decay",
                "worst_slack": r.worst_slack,
                "bound_holds": r.bound_holds,
                "monotone": r.monotone,
                "pass": pass,
            });
        }
        "fixed_point" => {
            let r = solver
                .fixed_point(&field0, 1e-12, 500)
                .map_err(CliError::MeanField)?;
            let mut hist = String::from("# iter sup_dist_to_c0\n");
            for (i, h) in r.history.iter().enumerate() {
                hist.push_str(&format!("{i} {}\n", fmt_f64(*h)));
            }
            write_out(&common.out, &mut manifest, "contraction.csv", &hist)?;
            let bound = solver.mu / (solver.mu + solver.alpha * r.eps0);
            let max_factor = r
                .history
                .windows(2)
                .filter(|w| w[0] > 1e-13)
                .map(|w| w[1] / w[0])
                .fold(0.0f64, f64::max);
            pass = max_factor <= bound + 1e-9;
            report = serde_json::json!({
                "study": "fixed_point",
                "iterations": r.iterations,
                "eps0": r.eps0,
                "contraction_bound": bound,
                "max_factor": max_factor,
                "pass": pass,
            });
        }
        "l2_decay" => {
            let r = solver.l2_decay_check(&field0, mf.t_end, mf.out_dt)?;
            let mut decay = String::from("# t mass l2_to_c0\n");
            for p in &r.trace {
                decay.push_str(&format!(
                    "{} {} {}\n",
                    fmt_f64(p.t),
                    fmt_f64(p.mass),
                    fmt_f64(p.l2_to_c0)
                ));
            }
            write_out(&common.out, &mut manifest, "decay.csv", &decay)?;
            pass = r.monotone && r.r_squared > 0.95;
            report = serde_json::json!({
                "study": "l2_decay",
                "monotone": r.monotone,
                "rate": r.rate,
                "r_squared": r.r_squared,
                "pass": pass,
            });
        }
        other => {
            return Err(CliError::Config(ConfigError::Invalid(format!(
                "unknown meanfield study '{other}'"
            ))))
        }
    }

    let report_text = serde_json::to_string_pretty(&report).unwrap();
    write_out(&common.out, &mut manifest, "report.json", &report_text)?;
    manifest.write(&common.out)?;
    println!("{report_text}");
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn experiment_detail_csv(outcome: &ExperimentOutcome) -> Option<String> {
    let summary = &outcome.summary;
    let rows: Option<(&str, Vec<BTreeMap<String, serde_json::Value>>)> = match outcome.name.as_str() {
        "stationarity" => summary.get("results").and_then(|r| {
            serde_json::from_value(r.clone()).ok().map(|v| ("results", v))
        }),
        "slivnyak" => summary.get("results").and_then(|r| {
            serde_json::from_value(r.clone()).ok().map(|v| ("results", v))
        }),
        "scaling-c1" | "scaling-c2" => summary.get("rungs").and_then(|r| {
            serde_json::from_value(r.clone()).ok().map(|v| ("rungs", v))
        }),
        _ => None,
    };
    let (_, rows) = rows?;
    if rows.is_empty() {
        return None;
    }
    let cols: Vec<&String> = rows[0].keys().collect();
    let mut out = cols.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in &rows {
        let cells: Vec<String> = row.values().map(|v| v.to_string().replace(',', ";")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Some(out)
}

fn experiment(
    name: &str,
    cfg: &RunConfig,
    text: &str,
    common: &CommonArgs,
    expensive: bool,
) -> Result<ExitCode, CliError> {
    std::fs::create_dir_all(&common.out)?;
    let outcome = run_named(name, cfg, common.seed, expensive)?;
    let mut manifest = RunManifest::start(&format!("experiment {name}"), common.seed.unwrap_or(7), text);
    let summary_text = serde_json::to_string_pretty(&outcome).unwrap();
    write_out(&common.out, &mut manifest, "summary.json", &summary_text)?;
    if let Some(detail) = experiment_detail_csv(&outcome) {
        write_out(&common.out, &mut manifest, "detail.csv", &detail)?;
    }
    manifest.write(&common.out)?;
    println!("{summary_text}");
    Ok(if outcome.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}
