//! One complete run: build the models, sample, write every output file.

use std::path::{Path, PathBuf};

use lfmc_core::{FailureEstimate, RunError};

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{RunManifest, RunStatus};
use crate::report::{emit_reports, ReportPaths, Summary};

#[derive(Debug)]
pub struct RunOutcome {
    pub estimate: FailureEstimate,
    pub summary: Summary,
    pub paths: ReportPaths,
    pub manifest_path: PathBuf,
}

impl RunOutcome {
    /// Exit code for a completed or partially completed run.
    pub fn exit_code(&self) -> u8 {
        if self.estimate.converged {
            crate::error::exit::SUCCESS
        } else {
            crate::error::exit::NON_CONVERGENCE
        }
    }
}

/// Run `config` and write reports plus a manifest into `out_dir`.
///
/// A run that stops at `max_subsets` still writes its partial reports and is
/// returned as `Ok` with `converged == false`. Model and runtime failures
/// write a manifest with status `failed` and return the error.
pub fn execute(config: &Config, out_dir: &Path) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let mut manifest = RunManifest::start(config, out_dir);
    let problem = config.build()?;
    let lf_names = problem.lf_names();
    let result = lfmc_core::run(problem.spec, &problem.inputs, &problem.run);
    let estimate = match result {
        Ok(est) => est,
        Err(RunError::NonConvergence { partial, .. }) => *partial,
        Err(e) => {
            manifest.finish(RunStatus::Failed, None, Some(e.to_string()));
            manifest.write(out_dir)?;
            return Err(e.into());
        }
    };
    let summary = Summary::new(&manifest.run_id, config.run.seed, config.strategy, &estimate, &lf_names);
    let paths = emit_reports(out_dir, &summary, &estimate, &lf_names)?;
    let status = if estimate.converged {
        RunStatus::Converged
    } else {
        RunStatus::Incomplete
    };
    manifest.finish(status, Some(paths.clone()), None);
    let manifest_path = manifest.write(out_dir)?;
    Ok(RunOutcome {
        estimate,
        summary,
        paths,
        manifest_path,
    })
}
