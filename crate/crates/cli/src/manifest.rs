use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{read_bytes, write_atomic};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// The fully resolved command, enough to re-run it.
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_secs: f64,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (without prefix) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> CliResult<RunManifest> {
        let bytes = read_bytes(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("{}: not a run manifest: {e}", path.display())))
    }
}
