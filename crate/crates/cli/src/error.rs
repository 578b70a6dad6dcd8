use std::path::PathBuf;

use lfmc_core::RunError;
use thiserror::Error;

use crate::external::ExternalError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration{}: {message}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, message: String },
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write report {path}: {message}")]
    Report { path: PathBuf, message: String },
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 2;
    pub const RUNTIME: u8 = 3;
    pub const NON_CONVERGENCE: u8 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Validation { .. } => exit::VALIDATION,
            CliError::Run(RunError::NonConvergence { .. }) => exit::NON_CONVERGENCE,
            CliError::External(_) | CliError::Run(_) | CliError::Report { .. } => exit::RUNTIME,
        }
    }
}
