//! Run manifests: enough to repeat a run and check it reproduced.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_atomic, FileDigest};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub workers: usize,
    /// Fully resolved configuration as TOML (keeps infinities intact).
    pub config_toml: String,
    pub started_at: String,
    pub wall_clock_s: f64,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn config(&self) -> CliResult<ExperimentConfig> {
        ExperimentConfig::from_toml(&self.config_toml)
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut data = serde_json::to_vec_pretty(self).map_err(|e| CliError::Schema(e.to_string()))?;
        data.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &data)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: bad manifest: {e}", path.display())))
    }

    /// Files whose digest differs from `other`, or that are missing in it.
    pub fn differing_outputs(&self, other: &[FileDigest]) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|d| !other.iter().any(|o| o == *d))
            .map(|d| d.file.clone())
            .collect()
    }
}
