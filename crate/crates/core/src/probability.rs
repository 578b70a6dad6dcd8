//! Local model probabilities.
//!
//! At a query point each correction `G_i` is Gaussian, so its magnitude
//! `ζ_i = |G_i|` is folded-Gaussian. The probability that model `i` has the
//! smallest (optionally cost-scaled) correction magnitude is
//!
//! ```text
//! p_i = ∫_0^∞ f_ζi(z) · Π_{j≠i} [1 − F_ζj(z)] dz
//! ```
//!
//! which is evaluated for all models at once with adaptive Gauss–Kronrod
//! quadrature.

use libm::{erf, erfc};
use thiserror::Error;

use crate::quadrature::{integrate_vector, QuadratureSettings};

/// Floor applied to degenerate correction standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Every σ at or below this value marks the probability vector as degenerate.
pub const DEGENERATE_SIGMA: f64 = 1e-9;

const TAIL_SIGMAS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbabilityError {
    #[error("at least one model is required")]
    Empty,
    #[error("expected {expected} cost entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cost values must be positive and finite, got {0}")]
    NonPositiveCost(f64),
    #[error("biasing exponent must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("gamma overrides must be finite and >= 1, got {0}")]
    InvalidGamma(f64),
    #[error("correction parameters must be finite (mu = {mu}, sigma = {sigma})")]
    NonFinite { mu: f64, sigma: f64 },
    #[error("model-probability quadrature did not converge (raw values {raw:?})")]
    QuadratureNonConvergence { raw: Vec<f64> },
}

/// Mean and standard deviation of a correction term at one point; the
/// magnitude of that correction is folded-Gaussian with these parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedGaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl FoldedGaussianParams {
    /// `sigma` is floored at [`SIGMA_FLOOR`].
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self {
            mu,
            sigma: sigma.max(SIGMA_FLOOR),
        }
    }

    fn scaled(self, factor: f64) -> Self {
        Self::new(self.mu * factor, self.sigma * factor)
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_9;

/// Density of the folded Gaussian; zero for `z < 0`.
pub fn folded_pdf(z: f64, p: FoldedGaussianParams) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    let a = (z - p.mu) / p.sigma;
    let b = (z + p.mu) / p.sigma;
    FRAC_1_SQRT_2PI / p.sigma * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp())
}

/// Distribution function of the folded Gaussian; zero for `z < 0`.
pub fn folded_cdf(z: f64, p: FoldedGaussianParams) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    let s = std::f64::consts::SQRT_2 * p.sigma;
    0.5 * (erf((z - p.mu) / s) + erf((z + p.mu) / s))
}

/// Standard normal CDF `Φ(x)`; exact at ±∞.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `1 − F(z)`, computed through `erfc` so the upper tail keeps its precision.
pub fn folded_sf(z: f64, p: FoldedGaussianParams) -> f64 {
    if z < 0.0 {
        return 1.0;
    }
    let s = std::f64::consts::SQRT_2 * p.sigma;
    0.5 * (erfc((z - p.mu) / s) + erfc((z + p.mu) / s))
}

/// Per-model computational cost and the biasing exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    tau: Vec<f64>,
    beta: f64,
    gamma_override: Option<Vec<f64>>,
}

impl CostModel {
    /// Costs are normalized so that the cheapest model has `τ = 1`.
    pub fn new(raw_tau: &[f64], beta: f64) -> Result<Self, ProbabilityError> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(ProbabilityError::InvalidBeta(beta));
        }
        Ok(Self {
            tau: normalize_costs(raw_tau)?,
            beta,
            gamma_override: None,
        })
    }

    /// Unit costs for `n` models; every γ is 1.
    pub fn uniform(n: usize) -> Self {
        Self {
            tau: vec![1.0; n],
            beta: 0.0,
            gamma_override: None,
        }
    }

    /// Use the given γ values directly instead of `τ^β`.
    pub fn with_gamma_override(mut self, gamma: Vec<f64>) -> Result<Self, ProbabilityError> {
        if gamma.len() != self.tau.len() {
            return Err(ProbabilityError::LengthMismatch {
                expected: self.tau.len(),
                got: gamma.len(),
            });
        }
        if let Some(&g) = gamma.iter().find(|g| !g.is_finite() || **g < 1.0) {
            return Err(ProbabilityError::InvalidGamma(g));
        }
        self.gamma_override = Some(gamma);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma_override(&self) -> Option<&[f64]> {
        self.gamma_override.as_deref()
    }

    /// The multiplicative biasing factor γ(τ_i) for each model.
    pub fn gamma(&self) -> Vec<f64> {
        match &self.gamma_override {
            Some(g) => g.clone(),
            None => self.tau.iter().map(|t| t.powf(self.beta)).collect(),
        }
    }
}

/// Divide every cost by the smallest one.
pub fn normalize_costs(raw: &[f64]) -> Result<Vec<f64>, ProbabilityError> {
    if raw.is_empty() {
        return Err(ProbabilityError::Empty);
    }
    if let Some(&bad) = raw.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(ProbabilityError::NonPositiveCost(bad));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(raw.iter().map(|t| t / min).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelProbabilities {
    /// Renormalized to sum to one.
    pub values: Vec<f64>,
    /// Sum of the quadrature results before renormalization.
    pub raw_sum: f64,
    /// All correction distributions are effectively point masses; the values
    /// are the limiting indicator of the smallest |μ|.
    pub degenerate: bool,
}

impl ModelProbabilities {
    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.values.iter().enumerate() {
            if p > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Probability that each correction has the smallest magnitude.
pub fn local_model_probabilities(
    params: &[FoldedGaussianParams],
) -> Result<ModelProbabilities, ProbabilityError> {
    local_model_probabilities_with(params, &QuadratureSettings::default())
}

pub fn local_model_probabilities_with(
    params: &[FoldedGaussianParams],
    settings: &QuadratureSettings,
) -> Result<ModelProbabilities, ProbabilityError> {
    if params.is_empty() {
        return Err(ProbabilityError::Empty);
    }
    if let Some(p) = params.iter().find(|p| !p.mu.is_finite() || !p.sigma.is_finite()) {
        return Err(ProbabilityError::NonFinite {
            mu: p.mu,
            sigma: p.sigma,
        });
    }
    let degenerate = params.iter().all(|p| p.sigma <= DEGENERATE_SIGMA);
    let n = params.len();
    if n == 1 {
        return Ok(ModelProbabilities {
            values: vec![1.0],
            raw_sum: 1.0,
            degenerate,
        });
    }

    if degenerate {
        return Ok(point_mass_probabilities(params));
    }

    // The min event is scale invariant: integrate on [0, 1] after dividing
    // by z_max.
    let z_max = params
        .iter()
        .map(|p| p.mu.abs() + TAIL_SIGMAS * p.sigma)
        .fold(0.0, f64::max);
    let scaled: Vec<FoldedGaussianParams> = params
        .iter()
        .map(|p| FoldedGaussianParams {
            mu: p.mu.abs() / z_max,
            sigma: (p.sigma / z_max).max(DEGENERATE_SIGMA),
        })
        .collect();

    // Break around each density's centre so no narrow peak or tail is missed.
    let mut breaks = vec![0.0, 1.0];
    for p in &scaled {
        for offset in [-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0] {
            let z = p.mu + offset * p.sigma;
            if z > 0.0 && z < 1.0 {
                breaks.push(z);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);

    let mut pdf = vec![0.0; n];
    let mut sf = vec![0.0; n];
    let result = integrate_vector(
        |z, out| {
            for (j, p) in scaled.iter().enumerate() {
                pdf[j] = folded_pdf(z, *p);
                sf[j] = folded_sf(z, *p);
            }
            for i in 0..n {
                let mut v = pdf[i];
                if v != 0.0 {
                    for (j, s) in sf.iter().enumerate() {
                        if j != i {
                            v *= s;
                        }
                    }
                }
                out[i] = v;
            }
        },
        &breaks,
        n,
        settings,
    );

    if !result.converged {
        return Err(ProbabilityError::QuadratureNonConvergence { raw: result.values });
    }
    let raw_sum: f64 = result.values.iter().sum();
    let values = result.values.iter().map(|v| v.max(0.0) / raw_sum).collect();
    Ok(ModelProbabilities {
        values,
        raw_sum,
        degenerate,
    })
}

/// All spreads negligible: the smallest `|μ|` wins outright, exact ties share.
fn point_mass_probabilities(params: &[FoldedGaussianParams]) -> ModelProbabilities {
    let best = params.iter().map(|p| p.mu.abs()).fold(f64::INFINITY, f64::min);
    let tol = DEGENERATE_SIGMA * (1.0 + best);
    let winners: Vec<bool> = params.iter().map(|p| p.mu.abs() - best <= tol).collect();
    let count = winners.iter().filter(|w| **w).count() as f64;
    ModelProbabilities {
        values: winners.iter().map(|w| if *w { 1.0 / count } else { 0.0 }).collect(),
        raw_sum: 1.0,
        degenerate: true,
    }
}

/// Probabilities of having the smallest cost-scaled correction `γ(τ_i)|G_i|`.
pub fn cost_biased_probabilities(
    params: &[FoldedGaussianParams],
    cost: &CostModel,
) -> Result<ModelProbabilities, ProbabilityError> {
    if params.len() != cost.len() {
        return Err(ProbabilityError::LengthMismatch {
            expected: params.len(),
            got: cost.len(),
        });
    }
    let gamma = cost.gamma();
    if gamma.iter().all(|g| *g == 1.0) {
        return local_model_probabilities(params);
    }
    let biased: Vec<_> = params.iter().zip(&gamma).map(|(p, g)| p.scaled(*g)).collect();
    local_model_probabilities(&biased)
}
