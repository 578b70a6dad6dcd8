//! Corrected low-fidelity models and their assembly into one surrogate.
//!
//! Each low-fidelity model `L_i` is paired with a Gaussian-process correction
//! `G_i` trained on `H − L_i`. At a query point the corrections' means and
//! standard deviations give cost-biased model probabilities, which drive one
//! of three assembly strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{FitOptions, GaussianProcess, GpError, Prediction, TrainingSet};
use crate::model::{ModelError, ModelHandle};
use crate::probability::{
    cost_biased_probabilities, standard_normal_cdf, CostModel, FoldedGaussianParams, ProbabilityError,
};
use crate::rng::{streams, StreamSplitter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("invalid ensemble: {0}")]
    Config(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Probability(#[from] ProbabilityError),
    #[error("model `{model}` failed at {x:?}: {source}")]
    Model {
        model: String,
        x: Vec<f64>,
        #[source]
        source: ModelError,
    },
    #[error("threshold must not be NaN")]
    NanThreshold,
}

/// How corrected low-fidelity models are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Probability-weighted average of all corrected models.
    #[serde(alias = "LFMA")]
    Lfma,
    /// The single most probable corrected model.
    #[default]
    #[serde(alias = "LFDS")]
    Lfds,
    /// One corrected model drawn according to the probabilities.
    #[serde(alias = "LFSS")]
    Lfss,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Lfma => "lfma",
            Strategy::Lfds => "lfds",
            Strategy::Lfss => "lfss",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lfma" => Ok(Strategy::Lfma),
            "lfds" => Ok(Strategy::Lfds),
            "lfss" => Ok(Strategy::Lfss),
            other => Err(format!("unknown strategy `{other}` (expected lfma, lfds or lfss)")),
        }
    }
}

/// `|S − F| / σ`, with `σ = 0` giving `+∞` off the threshold and `0` on it.
pub fn learning_function(s_value: f64, sigma: f64, threshold: f64) -> f64 {
    let gap = (s_value - threshold).abs();
    if sigma > 0.0 {
        gap / sigma
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Surrogate failure indicator: `S ≤ F`.
pub fn classify(eval: &SurrogateEvaluation, threshold: f64) -> bool {
    eval.s_value <= threshold
}

/// Probability that the surrogate misclassifies the point, `Φ(−U)`.
pub fn misclassification_prob(eval: &SurrogateEvaluation) -> f64 {
    standard_normal_cdf(-eval.u_value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEvaluation {
    pub s_value: f64,
    pub sigma: f64,
    pub u_value: f64,
    /// Cost-biased model probabilities, indexed like the low-fidelity models.
    pub probabilities: Vec<f64>,
    /// Low-fidelity responses that were computed, keyed by model index.
    pub lf_values: BTreeMap<usize, f64>,
    /// Chosen model index under LFDS and LFSS.
    pub selected_model: Option<usize>,
    pub correction_means: Vec<f64>,
    pub correction_stds: Vec<f64>,
}

/// An ensemble before its corrections are trained.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub input_dim: usize,
    pub hf: ModelHandle,
    pub lfs: Vec<ModelHandle>,
    pub cost: CostModel,
    pub strategy: Strategy,
    pub fit: FitOptions,
}

impl EnsembleSpec {
    pub fn n_models(&self) -> usize {
        self.lfs.len()
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.input_dim == 0 {
            return Err(SurrogateError::Config("input dimension must be positive".into()));
        }
        if self.lfs.is_empty() {
            return Err(SurrogateError::Config("at least one low-fidelity model is required".into()));
        }
        if self.cost.len() != self.lfs.len() {
            return Err(SurrogateError::Config(format!(
                "{} costs for {} low-fidelity models",
                self.cost.len(),
                self.lfs.len()
            )));
        }
        for h in std::iter::once(&self.hf).chain(&self.lfs) {
            if !h.projection_is_valid(self.input_dim) {
                return Err(SurrogateError::Config(format!(
                    "model `{}` has projection {:?} outside input dimension {}",
                    h.name, h.projection, self.input_dim
                )));
            }
        }
        Ok(())
    }

    /// Train one correction per low-fidelity model on `H − L_i`.
    /// `lf_values[p][i]` is model `i` at point `p`.
    pub fn train(
        self,
        points: &[Vec<f64>],
        hf_values: &[f64],
        lf_values: &[Vec<f64>],
        streams_from: &StreamSplitter,
    ) -> Result<ModelEnsemble, SurrogateError> {
        self.validate()?;
        if points.len() != hf_values.len() || points.len() != lf_values.len() {
            return Err(SurrogateError::Config("training arrays differ in length".into()));
        }
        let mut corrections = Vec::with_capacity(self.lfs.len());
        for i in 0..self.lfs.len() {
            let targets = hf_values
                .iter()
                .zip(lf_values)
                .map(|(h, l)| h - l[i])
                .collect();
            let data = TrainingSet::new(points.to_vec(), targets)?;
            let options = FitOptions {
                seed: streams_from.derive_seed(&streams::gp_multistart(i)),
                ..self.fit.clone()
            };
            corrections.push(GaussianProcess::fit(data, options)?);
        }
        ModelEnsemble::new(self, corrections)
    }
}

/// Low-fidelity models with trained corrections.
#[derive(Debug, Clone)]
pub struct ModelEnsemble {
    spec: EnsembleSpec,
    corrections: Vec<GaussianProcess>,
}

impl ModelEnsemble {
    pub fn new(spec: EnsembleSpec, corrections: Vec<GaussianProcess>) -> Result<Self, SurrogateError> {
        spec.validate()?;
        if corrections.len() != spec.lfs.len() {
            return Err(SurrogateError::Config(format!(
                "{} corrections for {} low-fidelity models",
                corrections.len(),
                spec.lfs.len()
            )));
        }
        if let Some(g) = corrections.iter().find(|g| g.dim() != spec.input_dim) {
            return Err(SurrogateError::Gp(GpError::DimensionMismatch {
                expected: spec.input_dim,
                got: g.dim(),
            }));
        }
        Ok(Self { spec, corrections })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn strategy(&self) -> Strategy {
        self.spec.strategy
    }

    pub fn hf(&self) -> &ModelHandle {
        &self.spec.hf
    }

    pub fn lfs(&self) -> &[ModelHandle] {
        &self.spec.lfs
    }

    pub fn corrections(&self) -> &[GaussianProcess] {
        &self.corrections
    }

    pub fn n_models(&self) -> usize {
        self.spec.lfs.len()
    }

    pub fn evaluate_hf(&self, x: &[f64]) -> Result<f64, SurrogateError> {
        evaluate_handle(&self.spec.hf, x)
    }

    pub fn evaluate_lf(&self, i: usize, x: &[f64]) -> Result<f64, SurrogateError> {
        evaluate_handle(&self.spec.lfs[i], x)
    }

    /// Assemble the surrogate at `x` and score it against `threshold`. A
    /// threshold of `+∞` gives `U = ∞`. `rng` is only drawn from under LFSS.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        threshold: f64,
        rng: &mut R,
    ) -> Result<SurrogateEvaluation, SurrogateError> {
        if threshold.is_nan() {
            return Err(SurrogateError::NanThreshold);
        }
        let preds: Vec<Prediction> = self
            .corrections
            .iter()
            .map(|g| g.predict(x))
            .collect::<Result<_, _>>()?;
        let probabilities = self.probabilities(&preds)?;
        let correction_means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
        let correction_stds: Vec<f64> = preds.iter().map(|p| p.std).collect();

        let mut lf_values = BTreeMap::new();
        let (s_value, sigma, selected_model) = match self.spec.strategy {
            Strategy::Lfma => {
                let mut s = 0.0;
                let mut v = 0.0;
                for (i, p) in probabilities.iter().enumerate() {
                    let l = self.evaluate_lf(i, x)?;
                    lf_values.insert(i, l);
                    s += p * (l + correction_means[i]);
                    v += (p * correction_stds[i]).powi(2);
                }
                (s, v.sqrt(), None)
            }
            Strategy::Lfds | Strategy::Lfss => {
                let k = if self.spec.strategy == Strategy::Lfds {
                    argmax_lowest(&probabilities)
                } else {
                    draw_categorical(&probabilities, rng.random::<f64>())
                };
                let l = self.evaluate_lf(k, x)?;
                lf_values.insert(k, l);
                (l + correction_means[k], correction_stds[k], Some(k))
            }
        };
        Ok(SurrogateEvaluation {
            s_value,
            sigma,
            u_value: learning_function(s_value, sigma, threshold),
            probabilities,
            lf_values,
            selected_model,
            correction_means,
            correction_stds,
        })
    }

    fn probabilities(&self, preds: &[Prediction]) -> Result<Vec<f64>, SurrogateError> {
        if preds.len() == 1 {
            return Ok(vec![1.0]);
        }
        let params: Vec<FoldedGaussianParams> = preds
            .iter()
            .map(|p| FoldedGaussianParams::new(p.mean, p.std))
            .collect();
        match cost_biased_probabilities(&params, &self.spec.cost) {
            Ok(p) => Ok(p.values),
            // a slightly under-resolved integral is still a usable ranking
            Err(ProbabilityError::QuadratureNonConvergence { raw }) => {
                let sum: f64 = raw.iter().sum();
                if (sum - 1.0).abs() <= 1e-3 {
                    log::warn!("model-probability quadrature did not converge (sum {sum}); renormalizing");
                    Ok(raw.iter().map(|v| v.max(0.0) / sum).collect())
                } else {
                    Err(ProbabilityError::QuadratureNonConvergence { raw }.into())
                }
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Add an HF observation at `x` to every correction whose low-fidelity
    /// model was evaluated in `eval`, with target `H − L_i`. Returns how many
    /// corrections already held the point.
    pub fn absorb(
        &mut self,
        x: &[f64],
        hf_value: f64,
        eval: &SurrogateEvaluation,
        reoptimize: bool,
    ) -> Result<usize, SurrogateError> {
        let mut duplicates = 0;
        for (&i, &l) in &eval.lf_values {
            let r = self.corrections[i].add_point_and_retrain(x, hf_value - l, reoptimize)?;
            if r.warning.is_some() {
                duplicates += 1;
            }
            self.corrections[i] = r.gp;
        }
        Ok(duplicates)
    }
}

fn evaluate_handle(h: &ModelHandle, x: &[f64]) -> Result<f64, SurrogateError> {
    h.evaluate(x).map_err(|source| SurrogateError::Model {
        model: h.name.clone(),
        x: x.to_vec(),
        source,
    })
}

fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Index `k` with `Σ_{j<k} p_j ≤ u < Σ_{j≤k} p_j`; rounding slack goes to the
/// last model with positive probability.
fn draw_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|v| *v > 0.0).unwrap_or(p.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{KernelConfig, KernelFamily, Standardization};
    use crate::model::FnModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn constant(v: f64) -> Arc<FnModel<impl Fn(&[f64]) -> f64 + Send + Sync>> {
        Arc::new(FnModel(move |_: &[f64]| v))
    }

    /// Correction with a fixed mean and (approximately) fixed std near x = 0:
    /// one training point far away so the posterior is the prior.
    fn flat_gp(mean: f64, std: f64) -> GaussianProcess {
        let data = TrainingSet::new(vec![vec![1e6]], vec![mean]).unwrap();
        let kernel = KernelConfig::new(KernelFamily::SquaredExponential, vec![1.0], std * std, 1e-10);
        let scaling = Standardization {
            target_mean: mean,
            ..Standardization::identity(1)
        };
        GaussianProcess::with_hyperparameters(data, kernel, scaling).unwrap()
    }

    fn ensemble(lf: &[f64], corr: &[(f64, f64)], strategy: Strategy) -> ModelEnsemble {
        let spec = EnsembleSpec {
            input_dim: 1,
            hf: ModelHandle::full(0, "hf", constant(0.0), 1),
            lfs: lf
                .iter()
                .enumerate()
                .map(|(i, v)| ModelHandle::full(i + 1, format!("lf{}", i + 1), constant(*v), 1))
                .collect(),
            cost: CostModel::uniform(lf.len()),
            strategy,
            fit: FitOptions::default(),
        };
        ModelEnsemble::new(spec, corr.iter().map(|(m, s)| flat_gp(*m, *s)).collect()).unwrap()
    }

    #[test]
    fn single_model_degenerates() {
        for strategy in [Strategy::Lfma, Strategy::Lfds, Strategy::Lfss] {
            let e = ensemble(&[2.0], &[(0.5, 0.3)], strategy);
            let r = e.evaluate(&[0.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert!((r.s_value - 2.5).abs() < 1e-12);
            assert!((r.sigma - 0.3).abs() < 1e-9);
            assert_eq!(r.lf_values.len(), 1);
            assert_eq!(r.probabilities, vec![1.0]);
        }
    }

    #[test]
    fn lfma_arithmetic() {
        // identical correction distributions give p = (0.5, 0.5)
        let e = ensemble(&[1.0, 3.0], &[(1.0, 1.0), (1.0, 1.0)], Strategy::Lfma);
        let r = e.evaluate(&[0.0], 3.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((r.probabilities[0] - 0.5).abs() < 1e-12);
        assert!((r.s_value - 3.0).abs() < 1e-9);
        assert!((r.sigma - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(r.u_value < 1e-8);
        assert_eq!(r.lf_values.len(), 2);
        assert_eq!(r.selected_model, None);
    }

    #[test]
    fn lfds_picks_smallest_correction_and_breaks_ties_low() {
        let e = ensemble(&[0.0, 0.0, 0.0], &[(2.0, 0.1), (0.1, 0.1), (1.0, 0.1)], Strategy::Lfds);
        let r = e.evaluate(&[0.0], -1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.selected_model, Some(1));
        assert_eq!(r.lf_values.keys().copied().collect::<Vec<_>>(), vec![1]);

        let tied = ensemble(&[5.0, 7.0], &[(0.3, 0.2), (0.3, 0.2)], Strategy::Lfds);
        let r = tied.evaluate(&[0.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.selected_model, Some(0));
    }

    #[test]
    fn lfss_frequencies_match_probabilities() {
        let e = ensemble(&[0.0, 0.0, 0.0], &[(0.0, 1.0), (0.5, 1.0), (1.5, 1.0)], Strategy::Lfss);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = e.evaluate(&[0.0], 0.0, &mut rng).unwrap().probabilities;
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let k = draw_categorical(&p, rng.random::<f64>());
            counts[k] += 1;
        }
        for k in 0..3 {
            let f = counts[k] as f64 / n as f64;
            let se = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((f - p[k]).abs() < 3.0 * se, "model {k}: {f} vs {}", p[k]);
        }
    }

    #[test]
    fn categorical_edges() {
        assert_eq!(draw_categorical(&[0.2, 0.8], 0.0), 0);
        assert_eq!(draw_categorical(&[0.2, 0.8], 0.2), 1);
        assert_eq!(draw_categorical(&[0.5, 0.5, 0.0], 0.999_999_999_999_999_9), 1);
        assert_eq!(draw_categorical(&[0.0, 1.0], 0.0), 1);
    }

    #[test]
    fn lfma_is_convex_combination() {
        let e = ensemble(&[-1.0, 2.0, 0.5], &[(0.2, 0.5), (-0.7, 0.9), (1.1, 0.4)], Strategy::Lfma);
        let r = e.evaluate(&[0.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s: Vec<f64> = (0..3).map(|i| r.lf_values[&i] + r.correction_means[i]).collect();
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= r.s_value && r.s_value <= hi);
        assert!((r.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lfds_choice_ignores_common_gamma_scale() {
        let mut e = ensemble(&[0.0, 0.0], &[(0.4, 0.3), (0.5, 0.2)], Strategy::Lfds);
        let base = e.evaluate(&[0.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        e.spec.cost = CostModel::uniform(2).with_gamma_override(vec![7.0, 7.0]).unwrap();
        let scaled = e.evaluate(&[0.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(base.selected_model, scaled.selected_model);
        for (a, b) in base.probabilities.iter().zip(&scaled.probabilities) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn learning_function_conventions() {
        assert_eq!(learning_function(1.0, 0.0, 2.0), f64::INFINITY);
        assert_eq!(learning_function(2.0, 0.0, 2.0), 0.0);
        assert_eq!(learning_function(3.0, 0.5, 2.0), 2.0);
        assert_eq!(learning_function(3.0, 0.5, f64::INFINITY), f64::INFINITY);
        assert!(learning_function(3.0, 1.0, 2.0) < learning_function(3.0, 0.5, 2.0));
    }

    #[test]
    fn classification_and_misclassification() {
        let e = ensemble(&[1.0], &[(0.0, 1.0)], Strategy::Lfds);
        let r = e.evaluate(&[0.0], 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(classify(&r, r.s_value));
        assert!(!classify(&r, r.s_value - 1e-9));
        assert!(classify(&r, r.s_value + 1.0));
        let mut r2 = r.clone();
        r2.u_value = 0.0;
        assert_eq!(misclassification_prob(&r2), 0.5);
        r2.u_value = f64::INFINITY;
        assert_eq!(misclassification_prob(&r2), 0.0);
        r2.u_value = 2.0;
        // mpmath: ncdf(-2)
        assert!((misclassification_prob(&r2) - 0.022_750_131_948_179_21).abs() < 1e-15);
    }

    #[test]
    fn absorb_retrains_only_evaluated_models() {
        let spec = EnsembleSpec {
            input_dim: 1,
            hf: ModelHandle::full(0, "hf", Arc::new(FnModel(|x: &[f64]| x[0] * x[0])), 1),
            lfs: vec![
                ModelHandle::full(1, "lf1", Arc::new(FnModel(|x: &[f64]| x[0])), 1),
                ModelHandle::full(2, "lf2", Arc::new(FnModel(|x: &[f64]| -x[0])), 1),
            ],
            cost: CostModel::uniform(2),
            strategy: Strategy::Lfds,
            fit: FitOptions::default(),
        };
        let xs: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let hf: Vec<f64> = xs.iter().map(|x| x[0] * x[0]).collect();
        let lf: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0], -x[0]]).collect();
        let mut e = spec.train(&xs, &hf, &lf, &StreamSplitter::new(3)).unwrap();
        assert_eq!(e.corrections()[0].data().targets(), &[2.0, 0.0, 0.0]);
        assert_eq!(e.corrections()[1].data().targets(), &[0.0, 0.0, 2.0]);

        let x = [0.5];
        let r = e.evaluate(&x, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let k = r.selected_model.unwrap();
        let h = e.evaluate_hf(&x).unwrap();
        assert_eq!(e.absorb(&x, h, &r, true).unwrap(), 0);
        assert_eq!(e.corrections()[k].len(), 4);
        assert_eq!(e.corrections()[1 - k].len(), 3);
        assert_eq!(e.absorb(&x, h, &r, false).unwrap(), 1);
    }

    #[test]
    fn invalid_projection_rejected() {
        let spec = EnsembleSpec {
            input_dim: 1,
            hf: ModelHandle::new(0, "hf", constant(0.0), vec![1]),
            lfs: vec![ModelHandle::full(1, "lf", constant(0.0), 1)],
            cost: CostModel::uniform(1),
            strategy: Strategy::Lfds,
            fit: FitOptions::default(),
        };
        assert!(matches!(spec.validate(), Err(SurrogateError::Config(_))));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("LFMA".parse::<Strategy>().unwrap(), Strategy::Lfma);
        assert_eq!("lfss".parse::<Strategy>().unwrap(), Strategy::Lfss);
        assert!("avg".parse::<Strategy>().is_err());
        assert_eq!(Strategy::Lfds.to_string(), "lfds");
    }
}
