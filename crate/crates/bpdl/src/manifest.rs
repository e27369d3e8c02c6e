//! Run manifests: enough provenance to reproduce every output bit-exactly.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// FNV-1a 64-bit content digest, hex-encoded.
pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Tool version (crate version at build time).
    pub version: String,
    pub subcommand: String,
    pub master_seed: u64,
    /// Full configuration text the run was built from.
    pub config: String,
    /// Unix timestamps (seconds); the only non-reproducible fields.
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Output file name -> content digest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn start(subcommand: &str, master_seed: u64, config: &str) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            master_seed,
            config: config.to_string(),
            started_unix: now_unix(),
            finished_unix: 0.0,
            outputs: BTreeMap::new(),
        }
    }

    /// Record an output file and its digest.
    pub fn add_output(&mut self, name: &str, contents: &[u8]) {
        self.outputs.insert(name.to_string(), digest_hex(contents));
    }

    /// Finish and write `manifest.json` into `dir`.
    pub fn write(mut self, dir: &Path) -> io::Result<()> {
        self.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text)
    }
}

fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}
