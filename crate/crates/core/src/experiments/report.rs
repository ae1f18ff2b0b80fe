//! Plain-text artifacts: CSV rows, gnuplot `.dat` tables and run manifests.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::WeakErrorRow;
use crate::Result;

pub const CSV_HEADER: &str = "N,est_p,se_p,est_s,se_s,gap,gap_se,replicas";

pub fn rows_to_csv(rows: &[WeakErrorRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{},{}", r.n, r.est_p, r.se_p, r.est_s, r.se_s, r.gap, r.gap_se, r.replicas);
    }
    s
}

/// Whitespace-separated table with `|gap|` appended for log-log plots.
pub fn rows_to_dat(rows: &[WeakErrorRow]) -> String {
    let mut s = String::from("# N est_p se_p est_s se_s gap gap_se abs_gap resolved\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {:.12e} {}",
            r.n,
            r.est_p,
            r.se_p,
            r.est_s,
            r.se_s,
            r.gap,
            r.gap_se,
            r.gap.abs(),
            u8::from(r.resolved)
        );
    }
    s
}

/// Hex SHA-256, used as a content hash of resolved inputs.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `manifest.json` written next to every artifact set.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    /// Resolved configuration, not the raw file.
    pub config: serde_json::Value,
    pub input_hash: String,
    pub outputs: Vec<String>,
    /// Subcommand-specific provenance (replica counts, reuse flags, fits).
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value) -> Self {
        let canonical = serde_json::to_string(&config).expect("json values serialize");
        Manifest {
            tool: "fluctlab",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            seed,
            input_hash: content_hash(canonical.as_bytes()),
            config,
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
