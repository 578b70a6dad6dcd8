//! Result files: `summary.json`, `samples.csv` and `lf_calls.csv`.
//!
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lfmc_core::{FailureEstimate, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const LF_CALLS_FILE: &str = "lf_calls.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCalls {
    pub model: String,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub index: usize,
    pub threshold: f64,
    /// Conditional probability of the subset.
    pub p: f64,
    pub delta: f64,
    pub gamma: f64,
    pub hf_calls: usize,
    pub lf_calls: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub seed: u64,
    pub strategy: Strategy,
    pub p_f: f64,
    pub cov: f64,
    pub n_subsets: usize,
    pub n_init: usize,
    /// High-fidelity calls including the initial design.
    pub hf_calls: usize,
    pub total_samples: usize,
    pub hf_fraction: f64,
    pub lf_calls: Vec<ModelCalls>,
    pub duplicate_points: usize,
    pub converged: bool,
    /// The run stopped before the threshold reached the failure level.
    pub incomplete: bool,
    pub subsets: Vec<SubsetReport>,
}

impl Summary {
    pub fn new(run_id: &str, seed: u64, strategy: Strategy, est: &FailureEstimate, lf_names: &[String]) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            strategy,
            p_f: est.p_f,
            cov: est.cov,
            n_subsets: est.n_subsets,
            n_init: est.n_init,
            hf_calls: est.total_hf_calls,
            total_samples: est.total_samples,
            hf_fraction: est.hf_fraction(),
            lf_calls: lf_names
                .iter()
                .zip(&est.lf_calls)
                .map(|(model, &calls)| ModelCalls {
                    model: model.clone(),
                    calls,
                })
                .collect(),
            duplicate_points: est.duplicate_points,
            converged: est.converged,
            incomplete: !est.converged,
            subsets: est
                .records
                .iter()
                .map(|r| SubsetReport {
                    index: r.index,
                    threshold: r.threshold,
                    p: r.cond_prob,
                    delta: r.delta,
                    gamma: r.gamma,
                    hf_calls: r.hf_calls,
                    lf_calls: r.lf_calls.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub samples: PathBuf,
    pub lf_calls: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            summary: dir.join(SUMMARY_FILE),
            samples: dir.join(SAMPLES_FILE),
            lf_calls: dir.join(LF_CALLS_FILE),
        }
    }
}

fn report_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Report {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Write all three report files into `dir`, creating it if needed.
pub fn emit_reports(dir: &Path, summary: &Summary, est: &FailureEstimate, lf_names: &[String]) -> Result<ReportPaths, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| report_error(dir, e))?;
    let paths = ReportPaths::in_dir(dir);
    write_summary(&paths.summary, summary)?;
    write_samples(&paths.samples, est, lf_names)?;
    write_lf_calls(&paths.lf_calls, est, lf_names)?;
    Ok(paths)
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| report_error(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| report_error(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| report_error(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<(), CliError> {
    w.into_inner()
        .map_err(|e| report_error(path, e))?
        .flush()
        .map_err(|e| report_error(path, e))
}

/// One row per stored sample, chain-major:
/// `subset, chain, index, x1..xd, response, u_value, hf_flag, selected_model`.
pub fn write_samples(path: &Path, est: &FailureEstimate, lf_names: &[String]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let dim = est.records.first().and_then(|r| r.samples.first()).map_or(0, Vec::len);
    let mut header = vec!["subset".to_string(), "chain".into(), "index".into()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    header.extend(["response", "u_value", "hf_flag", "selected_model"].map(String::from));
    w.write_record(&header).map_err(|e| report_error(path, e))?;
    for r in &est.records {
        for i in 0..r.len() {
            let mut row = vec![
                r.index.to_string(),
                (i / r.n_spc).to_string(),
                (i % r.n_spc).to_string(),
            ];
            row.extend(r.samples[i].iter().map(|v| v.to_string()));
            row.push(r.responses[i].to_string());
            row.push(r.u_values[i].to_string());
            row.push(u8::from(r.hf_flags[i]).to_string());
            row.push(r.selected_model[i].map(|m| lf_names[m].clone()).unwrap_or_default());
            w.write_record(&row).map_err(|e| report_error(path, e))?;
        }
    }
    finish(path, w)
}

/// Cumulative call counts after the initial design (subset 0) and after
/// every sample, in evaluation order.
pub fn write_lf_calls(path: &Path, est: &FailureEstimate, lf_names: &[String]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["subset".to_string(), "sample".into(), "hf_calls".into()];
    header.extend(lf_names.iter().cloned());
    w.write_record(&header).map_err(|e| report_error(path, e))?;

    let mut hf = est.n_init;
    let mut lf = vec![est.n_init; lf_names.len()];
    let write = |w: &mut csv::Writer<_>, subset: usize, sample: usize, hf: usize, lf: &[usize]| {
        let mut row = vec![subset.to_string(), sample.to_string(), hf.to_string()];
        row.extend(lf.iter().map(usize::to_string));
        w.write_record(&row).map_err(|e| report_error(path, e))
    };
    write(&mut w, 0, 0, hf, &lf)?;
    for r in &est.records {
        for i in 0..r.len() {
            hf += usize::from(r.hf_called[i]);
            for (j, c) in lf.iter_mut().enumerate() {
                *c += ((r.lf_mask[i] >> j) & 1) as usize;
            }
            write(&mut w, r.index, i, hf, &lf)?;
        }
    }
    finish(path, w)
}
