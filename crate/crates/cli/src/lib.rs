//! Configuration, external-model bridge and report writers for the `lfmc`
//! command-line tool.

pub mod config;
pub mod error;
pub mod external;
pub mod manifest;
pub mod report;
pub mod runner;

pub use config::{Config, GpConfig, InputsConfig, Problem};
pub use error::{exit, CliError};
pub use external::{ExternalError, ExternalModel, ExternalModelSpec};
pub use manifest::{run_id, RunManifest, RunStatus};
pub use report::{emit_reports, ReportPaths, Summary};
pub use runner::{execute, RunOutcome};
