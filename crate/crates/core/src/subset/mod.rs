//! Subset simulation driven by the multi-fidelity surrogate.
//!
//! The first subset draws independent samples; later subsets grow Markov
//! chains from the lowest-response samples of the previous subset. Every
//! sample is scored by the surrogate against a running intermediate
//! threshold and replaced by a high-fidelity evaluation whenever the learning
//! function is below `u_threshold`, which also retrains the corrections.

pub mod estimators;
pub mod mcmc;
pub mod quantile;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inputs::JointDistribution;
use crate::rng::{streams, StreamRng, StreamSplitter};
use crate::surrogate::{EnsembleSpec, ModelEnsemble, SurrogateError};

pub use estimators::{
    autocovariance, combine, correlation_factor, first_subset_cov, intermediate_subset_cov,
    point_failure_probabilities, point_failure_probability, quantile_sorted, subset_estimate,
};
pub use quantile::RunningQuantile;

/// Upper bound on low-fidelity models (per-sample call masks are 64-bit).
pub const MAX_LF_MODELS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("threshold did not reach the failure level within {max_subsets} subsets")]
    NonConvergence {
        max_subsets: usize,
        partial: Box<FailureEstimate>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Size of the initial design used to train the corrections.
    pub n_init: usize,
    /// Samples per subset.
    pub n_pts: usize,
    /// Markov chains per subset; defaults to `pi_target · n_pts`.
    pub n_chains: Option<usize>,
    /// Target conditional probability of each intermediate subset.
    pub pi_target: f64,
    /// Failure is `response ≤ failure_threshold`.
    pub failure_threshold: f64,
    /// Learning-function value at or above which the surrogate is trusted.
    /// `inf` forces a high-fidelity evaluation at every sample and bypasses
    /// the surrogate after the initial design.
    pub u_threshold: f64,
    pub max_subsets: usize,
    /// Half-width of the uniform proposal in standard-normal space, one value
    /// for all inputs or one per input.
    pub proposal_scale: Vec<f64>,
    pub seed: u64,
    /// Re-estimate hyperparameters on every `k`-th high-fidelity insertion;
    /// other insertions keep them fixed. `0` never re-estimates.
    pub reoptimize_stride: usize,
    /// Responses required before the running quantile is used as threshold.
    pub warmup: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_init: 20,
            n_pts: 20_000,
            n_chains: None,
            pi_target: 0.1,
            failure_threshold: 0.0,
            u_threshold: 2.0,
            max_subsets: 20,
            proposal_scale: vec![1.0],
            seed: 0,
            reoptimize_stride: 1,
            warmup: 10,
        }
    }
}

impl RunConfig {
    pub fn n_chains(&self) -> usize {
        self.n_chains
            .unwrap_or_else(|| (self.pi_target * self.n_pts as f64).round().max(1.0) as usize)
    }

    pub fn n_spc(&self) -> usize {
        self.n_pts / self.n_chains()
    }

    pub fn proposal_scale_for(&self, dim: usize) -> Vec<f64> {
        if self.proposal_scale.len() == 1 {
            vec![self.proposal_scale[0]; dim]
        } else {
            self.proposal_scale.clone()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), RunError> {
        let err = |m: String| Err(RunError::Config(m));
        if self.n_init < 2 {
            return err(format!("n_init must be at least 2, got {}", self.n_init));
        }
        if self.n_pts == 0 {
            return err("n_pts must be positive".into());
        }
        if !(self.pi_target > 0.0 && self.pi_target < 1.0) {
            return err(format!("pi_target must be in (0, 1), got {}", self.pi_target));
        }
        let n_chains = self.n_chains();
        if n_chains == 0 {
            return err("n_chains must be positive".into());
        }
        if !self.n_pts.is_multiple_of(n_chains) {
            return err(format!("n_chains ({n_chains}) must divide n_pts ({})", self.n_pts));
        }
        if n_chains as f64 > self.pi_target * self.n_pts as f64 + 1e-9 {
            return err(format!(
                "n_chains ({n_chains}) exceeds pi_target * n_pts ({}); not enough seeds per subset",
                self.pi_target * self.n_pts as f64
            ));
        }
        if !self.failure_threshold.is_finite() {
            return err("failure_threshold must be finite".into());
        }
        if self.u_threshold.is_nan() || self.u_threshold <= 0.0 {
            return err(format!("u_threshold must be positive, got {}", self.u_threshold));
        }
        if self.max_subsets == 0 {
            return err("max_subsets must be positive".into());
        }
        if self.proposal_scale.len() != 1 && self.proposal_scale.len() != dim {
            return err(format!(
                "proposal_scale needs 1 or {dim} values, got {}",
                self.proposal_scale.len()
            ));
        }
        if self.proposal_scale.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return err("proposal_scale values must be finite and non-negative".into());
        }
        Ok(())
    }
}

/// Arrays of one subset, flat and chain-major (`l * n_spc + m`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRecord {
    /// 1-based subset index.
    pub index: usize,
    pub n_chains: usize,
    pub n_spc: usize,
    /// Standard-normal coordinates of each sample.
    pub latent: Vec<Vec<f64>>,
    /// Physical inputs of each sample.
    pub samples: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    /// `∞` where the stored response is a high-fidelity value.
    pub u_values: Vec<f64>,
    /// Stored response is a high-fidelity value.
    pub hf_flags: Vec<bool>,
    /// Model chosen by LFDS/LFSS for the stored response.
    pub selected_model: Vec<Option<usize>>,
    /// A high-fidelity evaluation happened while producing this entry (also
    /// true for proposals that were evaluated and then rejected).
    pub hf_called: Vec<bool>,
    /// Bit `i` set when low-fidelity model `i` was evaluated for this entry.
    pub lf_mask: Vec<u64>,
    pub point_failure: Vec<f64>,
    /// Intermediate threshold `F_s` used for the estimate.
    pub threshold: f64,
    pub cond_prob: f64,
    pub delta: f64,
    /// Chain correlation factor (zero for the first subset).
    pub gamma: f64,
    /// Entries used as seeds for the next subset; empty in the last one.
    pub seed_indices: Vec<usize>,
    pub hf_calls: usize,
    pub lf_calls: Vec<usize>,
}

impl SubsetRecord {
    fn with_capacity(index: usize, n_chains: usize, n_spc: usize, n_models: usize) -> Self {
        let n = n_chains * n_spc;
        Self {
            index,
            n_chains,
            n_spc,
            latent: Vec::with_capacity(n),
            samples: Vec::with_capacity(n),
            responses: Vec::with_capacity(n),
            u_values: Vec::with_capacity(n),
            hf_flags: Vec::with_capacity(n),
            selected_model: Vec::with_capacity(n),
            hf_called: Vec::with_capacity(n),
            lf_mask: Vec::with_capacity(n),
            point_failure: Vec::new(),
            threshold: f64::NAN,
            cond_prob: f64::NAN,
            delta: f64::NAN,
            gamma: 0.0,
            seed_indices: Vec::new(),
            hf_calls: 0,
            lf_calls: vec![0; n_models],
        }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn is_first(&self) -> bool {
        self.index == 1
    }

    fn state(&self, i: usize) -> State {
        State {
            latent: self.latent[i].clone(),
            physical: self.samples[i].clone(),
            response: self.responses[i],
            u: self.u_values[i],
            hf: self.hf_flags[i],
            selected: self.selected_model[i],
        }
    }

    fn push(&mut self, s: &State, hf_called: bool, lf_mask: u64) {
        self.latent.push(s.latent.clone());
        self.samples.push(s.physical.clone());
        self.responses.push(s.response);
        self.u_values.push(s.u);
        self.hf_flags.push(s.hf);
        self.selected_model.push(s.selected);
        self.hf_called.push(hf_called);
        self.lf_mask.push(lf_mask);
    }

    /// Recompute `(P, δ, γ)` from the stored arrays and threshold.
    pub fn recompute_estimate(&self) -> (f64, f64, f64) {
        let pf = point_failure_probabilities(&self.responses, &self.u_values, self.threshold);
        subset_estimate(&pf, self.n_chains, self.n_spc, self.is_first())
    }

    pub fn summary(&self) -> SubsetSummary {
        SubsetSummary {
            index: self.index,
            threshold: self.threshold,
            cond_prob: self.cond_prob,
            delta: self.delta,
            hf_calls: self.hf_calls,
            lf_calls: self.lf_calls.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub index: usize,
    pub threshold: f64,
    pub cond_prob: f64,
    pub delta: f64,
    pub hf_calls: usize,
    pub lf_calls: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureEstimate {
    pub p_f: f64,
    pub cov: f64,
    pub n_subsets: usize,
    pub n_init: usize,
    /// High-fidelity calls including the initial design.
    pub total_hf_calls: usize,
    /// Low-fidelity calls per model including the initial design.
    pub lf_calls: Vec<usize>,
    /// `n_subsets · n_pts`.
    pub total_samples: usize,
    /// The last threshold reached the failure level.
    pub converged: bool,
    /// High-fidelity points that a correction already contained.
    pub duplicate_points: usize,
    pub records: Vec<SubsetRecord>,
}

impl FailureEstimate {
    pub fn hf_fraction(&self) -> f64 {
        self.total_hf_calls as f64 / self.total_samples as f64
    }

    pub fn summaries(&self) -> Vec<SubsetSummary> {
        self.records.iter().map(SubsetRecord::summary).collect()
    }
}

#[derive(Debug, Clone)]
struct State {
    latent: Vec<f64>,
    physical: Vec<f64>,
    response: f64,
    u: f64,
    hf: bool,
    selected: Option<usize>,
}

/// Evaluated sample plus the calls it cost.
struct Outcome {
    state: State,
    hf_called: bool,
    lf_mask: u64,
}

/// Stateful driver; exposes the individual phases for inspection.
pub struct Runner<'a> {
    cfg: RunConfig,
    inputs: &'a JointDistribution,
    ensemble: ModelEnsemble,
    splitter: StreamSplitter,
    lfss_rng: StreamRng,
    proposal: Vec<f64>,
    hf_calls: usize,
    lf_calls: Vec<usize>,
    insertions: usize,
    duplicates: usize,
}

fn draw_standard_normal(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

impl<'a> Runner<'a> {
    /// Validate, draw the initial design, evaluate every model on it and
    /// train the corrections.
    pub fn initialize(spec: EnsembleSpec, inputs: &'a JointDistribution, cfg: &RunConfig) -> Result<Self, RunError> {
        spec.validate()?;
        let dim = spec.input_dim;
        if inputs.dim() != dim {
            return Err(RunError::Config(format!(
                "input distribution has {} dimensions, models expect {dim}",
                inputs.dim()
            )));
        }
        if spec.n_models() > MAX_LF_MODELS {
            return Err(RunError::Config(format!("at most {MAX_LF_MODELS} low-fidelity models are supported")));
        }
        cfg.validate(dim)?;
        let splitter = StreamSplitter::new(cfg.seed);
        let mut rng = splitter.stream(streams::INIT_DOE);
        let n = spec.n_models();
        let mut latent = Vec::with_capacity(cfg.n_init);
        let mut points = Vec::with_capacity(cfg.n_init);
        let mut hf = Vec::with_capacity(cfg.n_init);
        let mut lf = Vec::with_capacity(cfg.n_init);
        for _ in 0..cfg.n_init {
            let u = draw_standard_normal(&mut rng, dim);
            let x = inputs.to_physical(&u);
            hf.push(eval_handle(&spec.hf, &x)?);
            lf.push(spec.lfs.iter().map(|h| eval_handle(h, &x)).collect::<Result<Vec<_>, _>>()?);
            latent.push(u);
            points.push(x);
        }
        let ensemble = spec.train(&points, &hf, &lf, &splitter)?;
        log::info!("trained {n} corrections on {} initial points", cfg.n_init);
        Ok(Self {
            proposal: cfg.proposal_scale_for(dim),
            cfg: cfg.clone(),
            inputs,
            ensemble,
            lfss_rng: splitter.stream(streams::LFSS_SELECTION),
            splitter,
            hf_calls: cfg.n_init,
            lf_calls: vec![cfg.n_init; n],
            insertions: 0,
            duplicates: 0,
        })
    }

    pub fn ensemble(&self) -> &ModelEnsemble {
        &self.ensemble
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn hf_calls(&self) -> usize {
        self.hf_calls
    }

    pub fn lf_calls(&self) -> &[usize] {
        &self.lf_calls
    }

    fn threshold(&self, running: &RunningQuantile, fallback: f64) -> f64 {
        if running.len() < self.cfg.warmup.max(1) {
            fallback
        } else {
            running
                .value()
                .expect("non-empty")
                .max(self.cfg.failure_threshold)
        }
    }

    /// Surrogate evaluation with high-fidelity substitution and retraining.
    fn evaluate(&mut self, latent: Vec<f64>, threshold: f64) -> Result<Outcome, RunError> {
        let physical = self.inputs.to_physical(&latent);
        let u_t = self.cfg.u_threshold;
        if u_t == f64::INFINITY {
            // the surrogate can never be trusted, so it is neither queried nor trained
            let h = self.ensemble.evaluate_hf(&physical)?;
            self.hf_calls += 1;
            return Ok(Outcome {
                state: State {
                    latent,
                    physical,
                    response: h,
                    u: f64::INFINITY,
                    hf: true,
                    selected: None,
                },
                hf_called: true,
                lf_mask: 0,
            });
        }
        let eval = self.ensemble.evaluate(&physical, threshold, &mut self.lfss_rng)?;
        let mut lf_mask = 0u64;
        for &i in eval.lf_values.keys() {
            self.lf_calls[i] += 1;
            lf_mask |= 1 << i;
        }
        if eval.u_value >= u_t {
            return Ok(Outcome {
                state: State {
                    latent,
                    physical,
                    response: eval.s_value,
                    u: eval.u_value,
                    hf: false,
                    selected: eval.selected_model,
                },
                hf_called: false,
                lf_mask,
            });
        }
        let h = self.ensemble.evaluate_hf(&physical)?;
        self.hf_calls += 1;
        self.insertions += 1;
        let stride = self.cfg.reoptimize_stride;
        let reoptimize = stride > 0 && self.insertions.is_multiple_of(stride);
        self.duplicates += self.ensemble.absorb(&physical, h, &eval, reoptimize)?;
        Ok(Outcome {
            state: State {
                latent,
                physical,
                response: h,
                u: f64::INFINITY,
                hf: true,
                selected: eval.selected_model,
            },
            hf_called: true,
            lf_mask,
        })
    }

    /// Independent sampling from the input distribution.
    pub fn run_first_subset(&mut self) -> Result<SubsetRecord, RunError> {
        let (n_chains, n_spc) = (self.cfg.n_chains(), self.cfg.n_spc());
        let dim = self.inputs.dim();
        let mut record = SubsetRecord::with_capacity(1, n_chains, n_spc, self.ensemble.n_models());
        let (hf0, lf0) = (self.hf_calls, self.lf_calls.clone());
        let mut rng = self.splitter.stream(streams::CRUDE_MC);
        let mut running = RunningQuantile::new(self.cfg.pi_target);
        for _ in 0..n_chains * n_spc {
            let u = draw_standard_normal(&mut rng, dim);
            let threshold = self.threshold(&running, f64::INFINITY);
            let out = self.evaluate(u, threshold)?;
            running.push(out.state.response);
            record.push(&out.state, out.hf_called, out.lf_mask);
        }
        self.finish(&mut record, hf0, &lf0)?;
        Ok(record)
    }

    /// Markov chains seeded from `prev`, conditioned on `response ≤ F_{s−1}`.
    pub fn run_subsequent_subset(&mut self, prev: &SubsetRecord) -> Result<SubsetRecord, RunError> {
        let (n_chains, n_spc) = (self.cfg.n_chains(), self.cfg.n_spc());
        if prev.seed_indices.len() != n_chains {
            return Err(RunError::Config(format!(
                "previous subset provides {} seeds for {n_chains} chains",
                prev.seed_indices.len()
            )));
        }
        let index = prev.index + 1;
        let previous_threshold = prev.threshold;
        let mut record = SubsetRecord::with_capacity(index, n_chains, n_spc, self.ensemble.n_models());
        let (hf0, lf0) = (self.hf_calls, self.lf_calls.clone());
        let mut running = RunningQuantile::new(self.cfg.pi_target);
        for (l, &seed) in prev.seed_indices.iter().enumerate() {
            let mut rng = self.splitter.stream(&streams::mcmc_chain(index, l));
            let mut current = prev.state(seed);
            for _ in 0..n_spc {
                let candidate = mcmc::propose(&current.latent, &self.proposal, &mut rng);
                let (next, hf_called, lf_mask) = if candidate == current.latent {
                    (current.clone(), false, 0)
                } else {
                    let threshold = self.threshold(&running, previous_threshold);
                    let out = self.evaluate(candidate, threshold)?;
                    if out.state.response > previous_threshold {
                        (current.clone(), out.hf_called, out.lf_mask)
                    } else {
                        (out.state, out.hf_called, out.lf_mask)
                    }
                };
                running.push(next.response);
                record.push(&next, hf_called, lf_mask);
                current = next;
            }
        }
        self.finish(&mut record, hf0, &lf0)?;
        Ok(record)
    }

    /// Threshold, estimates and seeds from the completed arrays.
    fn finish(&self, record: &mut SubsetRecord, hf0: usize, lf0: &[usize]) -> Result<(), RunError> {
        let mut sorted = record.responses.clone();
        sorted.sort_by(f64::total_cmp);
        let q = quantile_sorted(&sorted, self.cfg.pi_target);
        record.threshold = q.max(self.cfg.failure_threshold);
        record.point_failure = point_failure_probabilities(&record.responses, &record.u_values, record.threshold);
        let (p, delta, gamma) =
            subset_estimate(&record.point_failure, record.n_chains, record.n_spc, record.is_first());
        record.cond_prob = p;
        record.delta = delta;
        record.gamma = gamma;
        record.hf_calls = self.hf_calls - hf0;
        record.lf_calls = self.lf_calls.iter().zip(lf0).map(|(a, b)| a - b).collect();
        if !self.is_terminal(record) {
            let mut eligible: Vec<usize> = (0..record.len())
                .filter(|&i| record.responses[i] <= record.threshold)
                .collect();
            if eligible.len() < record.n_chains {
                return Err(RunError::Config(format!(
                    "subset {} has {} samples at or below its threshold, fewer than n_chains = {}",
                    record.index,
                    eligible.len(),
                    record.n_chains
                )));
            }
            eligible.sort_by(|&a, &b| record.responses[a].total_cmp(&record.responses[b]).then(a.cmp(&b)));
            eligible.truncate(record.n_chains);
            record.seed_indices = eligible;
        }
        log::info!(
            "subset {}: threshold {:.6e}, P {:.6e}, delta {:.4}, HF calls {}",
            record.index,
            record.threshold,
            record.cond_prob,
            record.delta,
            record.hf_calls
        );
        Ok(())
    }

    fn is_terminal(&self, record: &SubsetRecord) -> bool {
        record.threshold <= self.cfg.failure_threshold
    }

    fn estimate(&self, records: Vec<SubsetRecord>, converged: bool) -> FailureEstimate {
        let parts: Vec<(f64, f64)> = records.iter().map(|r| (r.cond_prob, r.delta)).collect();
        let (p_f, cov) = combine(&parts);
        FailureEstimate {
            p_f,
            cov,
            n_subsets: records.len(),
            n_init: self.cfg.n_init,
            total_hf_calls: self.hf_calls,
            lf_calls: self.lf_calls.clone(),
            total_samples: records.len() * self.cfg.n_pts,
            converged,
            duplicate_points: self.duplicates,
            records,
        }
    }

    /// Subsets until the threshold reaches the failure level.
    pub fn run(mut self) -> Result<FailureEstimate, RunError> {
        let mut records = vec![self.run_first_subset()?];
        loop {
            let last = records.last().expect("non-empty");
            if self.is_terminal(last) {
                return Ok(self.estimate(records, true));
            }
            if records.len() >= self.cfg.max_subsets {
                return Err(RunError::NonConvergence {
                    max_subsets: self.cfg.max_subsets,
                    partial: Box::new(self.estimate(records, false)),
                });
            }
            let next = self.run_subsequent_subset(last)?;
            records.push(next);
        }
    }
}

fn eval_handle(h: &crate::model::ModelHandle, x: &[f64]) -> Result<f64, RunError> {
    h.evaluate(x).map_err(|source| {
        RunError::Surrogate(SurrogateError::Model {
            model: h.name.clone(),
            x: x.to_vec(),
            source,
        })
    })
}

/// Initial design, then subsets until the failure level is reached.
pub fn run(spec: EnsembleSpec, inputs: &JointDistribution, cfg: &RunConfig) -> Result<FailureEstimate, RunError> {
    Runner::initialize(spec, inputs, cfg)?.run()
}

#[cfg(test)]
mod tests;
