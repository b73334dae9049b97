use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::jobs::Job;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub elapsed_ms: f64,
}

/// Written next to every output as `<out>.manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    /// The resolved job; `replay` runs it as is.
    pub job: Job,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }
}
