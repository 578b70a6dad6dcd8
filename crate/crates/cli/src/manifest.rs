//! Run manifests: the exact configuration of a run plus bookkeeping.
//!
//! The run id is the first 12 hex digits of the SHA-256 of the configuration
//! serialized as TOML (the seed is part of the configuration). Loading the
//! manifest's configuration reproduces the run exactly.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;
use crate::report::ReportPaths;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    Incomplete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub version: String,
    pub started_unix_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix_ms: Option<u64>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<ReportPaths>,
    pub config: Config,
}

pub fn run_id(config: &Config) -> String {
    let digest = Sha256::digest(config.to_toml_string().as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl RunManifest {
    pub fn start(config: &Config, output_dir: &Path) -> Self {
        Self {
            run_id: run_id(config),
            seed: config.run.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
            status: RunStatus::Running,
            error: None,
            output_dir: output_dir.to_path_buf(),
            outputs: None,
            config: config.clone(),
        }
    }

    pub fn finish(&mut self, status: RunStatus, outputs: Option<ReportPaths>, error: Option<String>) {
        self.finished_unix_ms = Some(now_ms());
        self.status = status;
        self.outputs = outputs;
        self.error = error;
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("manifest serializes to TOML")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, self.to_toml_string()))
            .map_err(|e| CliError::Report {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Parse {
            path: Some(path.to_path_buf()),
            message: e.to_string(),
        })
    }
}
