//! Exact Gaussian-process regression for the correction terms.
//!
//! Inputs and targets are standardized before fitting. The prior is
//! zero-mean in standardized units with covariance `s² (R(θ) + jitter·I)`,
//! where `R` is a unit-variance stationary correlation (squared-exponential
//! or Matérn 5/2, one lengthscale per input dimension). The signal variance
//! `s²` is profiled out of the negative log marginal likelihood in closed
//! form, so the numerical search only runs over log-lengthscales.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadSettings};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("training set is empty")]
    Empty,
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("expected input dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training input {index} duplicates an earlier input")]
    DuplicateInput { index: usize },
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid kernel configuration: {0}")]
    InvalidKernel(String),
    #[error("kernel matrix is not positive definite even with jitter {max_jitter:e}")]
    Singular { max_jitter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    SquaredExponential,
    Matern52,
}

/// Kernel hyperparameters, expressed in standardized units.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    /// Added to the diagonal, relative to the signal variance.
    pub noise_jitter: f64,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, signal_variance: f64, noise_jitter: f64) -> Self {
        Self {
            family,
            lengthscales,
            signal_variance,
            noise_jitter,
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.lengthscales.is_empty() {
            return Err(GpError::InvalidKernel("no lengthscales".into()));
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::InvalidKernel("lengthscales must be positive".into()));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(GpError::InvalidKernel("signal variance must be positive".into()));
        }
        if !(self.noise_jitter.is_finite() && self.noise_jitter >= 1e-12) {
            return Err(GpError::InvalidKernel("jitter must be >= 1e-12".into()));
        }
        Ok(())
    }

    /// Unit-variance correlation between two standardized inputs.
    fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        correlation(self.family, &self.lengthscales, a, b)
    }

    /// Prior covariance `k(a, b)` in standardized units.
    pub fn covariance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.signal_variance * self.correlation(a, b)
    }
}

fn correlation(family: KernelFamily, lengthscales: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum();
    match family {
        KernelFamily::SquaredExponential => (-0.5 * r2).exp(),
        KernelFamily::Matern52 => {
            let r = (5.0 * r2).sqrt();
            (1.0 + r + r * r / 3.0) * (-r).exp()
        }
    }
}

/// Affine maps from raw to standardized inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            input_mean: vec![0.0; dim],
            input_scale: vec![1.0; dim],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    /// Zero mean, unit (population) standard deviation; constant columns keep
    /// scale 1.
    pub fn from_data(data: &TrainingSet) -> Self {
        let n = data.len() as f64;
        let dim = data.dim();
        let mut input_mean = vec![0.0; dim];
        for x in data.inputs() {
            for (m, v) in input_mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut input_scale = vec![0.0; dim];
        for x in data.inputs() {
            for ((s, v), m) in input_scale.iter_mut().zip(x).zip(&input_mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut input_scale {
            *s = scale_or_one(s.sqrt());
        }
        let target_mean = data.targets().iter().sum::<f64>() / n;
        let var = data
            .targets()
            .iter()
            .map(|t| (t - target_mean) * (t - target_mean))
            .sum::<f64>()
            / n;
        Self {
            input_mean,
            input_scale,
            target_mean,
            target_scale: scale_or_one(var.sqrt()),
        }
    }

    fn input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_scale
    }
}

fn scale_or_one(s: f64) -> f64 {
    if s.is_finite() && s > 1e-12 {
        s
    } else {
        1.0
    }
}

/// Raw training inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(GpError::Empty);
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(GpError::DimensionMismatch { expected: 1, got: 0 });
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(GpError::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) || !targets[i].is_finite() {
                return Err(GpError::NonFinite);
            }
            if inputs[..i].iter().any(|y| y == x) {
                return Err(GpError::DuplicateInput { index: i });
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.inputs.iter().any(|y| y.as_slice() == x)
    }

    fn push_unchecked(&mut self, x: Vec<f64>, target: f64) {
        self.inputs.push(x);
        self.targets.push(target);
    }
}

/// Settings for hyperparameter estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub family: KernelFamily,
    pub n_starts: usize,
    /// Starts used when re-estimating after a new point; the first is the
    /// previous lengthscales.
    pub retrain_starts: usize,
    /// A requested re-estimation runs only once the training set has grown
    /// by this fraction since the last estimate; `0` re-estimates on every
    /// request.
    pub refit_growth: f64,
    /// Bounds on every lengthscale, in standardized input units.
    pub lengthscale_bounds: (f64, f64),
    /// Bounds on the signal variance, in standardized target units.
    pub signal_variance_bounds: (f64, f64),
    pub jitter: f64,
    pub max_jitter: f64,
    pub max_evaluations: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            n_starts: 8,
            retrain_starts: 2,
            refit_growth: 0.1,
            lengthscale_bounds: (1e-3, 1e3),
            signal_variance_bounds: (1e-3, 1e3),
            jitter: 1e-10,
            max_jitter: 1e-4,
            max_evaluations: 300,
            seed: 0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpWarning {
    /// The point was already in the training set and was skipped.
    DuplicatePoint,
}

#[derive(Debug, Clone)]
pub struct Retrained {
    pub gp: GaussianProcess,
    pub warning: Option<GpWarning>,
}

/// A conditioned Gaussian process. Immutable; updates return a new value.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    kernel: KernelConfig,
    data: TrainingSet,
    scaling: Standardization,
    options: FitOptions,
    inputs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    /// Lower Cholesky factor of `s² (R + jitter·I)`.
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    nll: f64,
    /// Training-set size at the last hyperparameter estimate.
    estimated_at: usize,
}

/// Cholesky factor of `s²(R + jI)`, escalating the jitter by doubling until
/// it succeeds or exceeds `max_jitter`. Returns the factor and the jitter used.
fn factorize(
    family: KernelFamily,
    lengthscales: &[f64],
    signal_variance: f64,
    inputs: &[Vec<f64>],
    jitter: f64,
    max_jitter: f64,
) -> Result<(DMatrix<f64>, f64), GpError> {
    let n = inputs.len();
    let mut corr = DMatrix::zeros(n, n);
    for i in 0..n {
        corr[(i, i)] = 1.0;
        for j in 0..i {
            let c = correlation(family, lengthscales, &inputs[i], &inputs[j]);
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let mut jitter = jitter;
    loop {
        let mut k = corr.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        k *= signal_variance;
        if let Some(ch) = Cholesky::new(k) {
            return Ok((ch.unpack(), jitter));
        }
        if jitter >= max_jitter {
            return Err(GpError::Singular { max_jitter });
        }
        jitter = (jitter * 2.0).min(max_jitter);
    }
}

fn solve_factor(factor: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let w = factor
        .solve_lower_triangular(rhs)
        .expect("Cholesky factor has a positive diagonal");
    factor
        .tr_solve_lower_triangular(&w)
        .expect("Cholesky factor has a positive diagonal")
}

fn log_det(factor: &DMatrix<f64>) -> f64 {
    2.0 * factor.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Negative log marginal likelihood from a Cholesky factor of `K` and the
/// (standardized) targets: `½ log|K| + ½ yᵀK⁻¹y + (n/2) log 2π`.
fn nll_from_factor(factor: &DMatrix<f64>, targets: &DVector<f64>) -> f64 {
    let alpha = solve_factor(factor, targets);
    let n = targets.len() as f64;
    0.5 * log_det(factor) + 0.5 * targets.dot(&alpha) + 0.5 * n * LN_2PI
}

/// Negative log marginal likelihood of `targets` at `inputs` under `kernel`,
/// all in the units the kernel is expressed in.
pub fn negative_log_likelihood(kernel: &KernelConfig, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64, GpError> {
    kernel.validate()?;
    let (factor, _) = factorize(
        kernel.family,
        &kernel.lengthscales,
        kernel.signal_variance,
        inputs,
        kernel.noise_jitter,
        kernel.noise_jitter,
    )?;
    Ok(nll_from_factor(&factor, &DVector::from_column_slice(targets)))
}

struct Profiled {
    nll: f64,
    signal_variance: f64,
}

/// NLL with `s²` set to its bounded optimum `clamp(yᵀC⁻¹y / n)`.
fn profiled_nll(
    family: KernelFamily,
    lengthscales: &[f64],
    inputs: &[Vec<f64>],
    targets: &DVector<f64>,
    options: &FitOptions,
) -> Option<Profiled> {
    let (factor, _) = factorize(family, lengthscales, 1.0, inputs, options.jitter, options.max_jitter).ok()?;
    let alpha = solve_factor(&factor, targets);
    let n = targets.len() as f64;
    let quad = targets.dot(&alpha);
    let (lo, hi) = options.signal_variance_bounds;
    let s2 = (quad / n).clamp(lo, hi);
    let nll = 0.5 * (n * s2.ln() + log_det(&factor)) + 0.5 * quad / s2 + 0.5 * n * LN_2PI;
    nll.is_finite().then_some(Profiled {
        nll,
        signal_variance: s2,
    })
}

impl GaussianProcess {
    /// Estimate hyperparameters by multi-start Nelder–Mead on the profiled
    /// negative log marginal likelihood, then condition on `data`.
    pub fn fit(data: TrainingSet, options: FitOptions) -> Result<Self, GpError> {
        Self::fit_from(data, options, None)
    }

    fn fit_from(data: TrainingSet, options: FitOptions, warm: Option<&[f64]>) -> Result<Self, GpError> {
        let dim = data.dim();
        let scaling = if options.standardize {
            Standardization::from_data(&data)
        } else {
            Standardization::identity(dim)
        };
        let inputs: Vec<Vec<f64>> = data.inputs().iter().map(|x| scaling.input(x)).collect();
        let targets = DVector::from_iterator(data.len(), data.targets().iter().map(|t| scaling.target(*t)));

        let (lo, hi) = options.lengthscale_bounds;
        let lower = vec![lo.ln(); dim];
        let upper = vec![hi.ln(); dim];
        // random restarts are drawn from the central part of the box
        let (start_lo, start_hi) = (lo.max(1e-2).ln(), hi.min(1e2).ln());

        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(data.len() as u64);
        let n_starts = if warm.is_some() { options.retrain_starts } else { options.n_starts }.max(1);
        let mut starts = Vec::with_capacity(n_starts);
        starts.push(match warm {
            Some(ls) => ls.iter().map(|l| l.ln()).collect(),
            None => vec![0.0; dim],
        });
        while starts.len() < n_starts {
            starts.push((0..dim).map(|_| rng.random_range(start_lo..start_hi)).collect());
        }

        let settings = NelderMeadSettings {
            max_evaluations: options.max_evaluations,
            f_tol: 1e-8,
            x_tol: 1e-3,
            initial_step: 1.0,
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        for (k, start) in starts.iter().enumerate() {
            // a warm start only needs to track a small drift
            let settings = if k == 0 && warm.is_some() {
                NelderMeadSettings {
                    initial_step: 0.25,
                    ..settings
                }
            } else {
                settings
            };
            let m = nelder_mead(
                |log_ls| {
                    let ls: Vec<f64> = log_ls.iter().map(|v| v.exp()).collect();
                    profiled_nll(options.family, &ls, &inputs, &targets, &options)
                        .map_or(f64::INFINITY, |p| p.nll)
                },
                start,
                &lower,
                &upper,
                &settings,
            );
            // strict comparison keeps the lowest start index on ties
            if m.value.is_finite() && best.as_ref().is_none_or(|(v, _)| m.value < *v) {
                best = Some((m.value, m.x));
            }
        }
        let (_, log_ls) = best.ok_or(GpError::Singular {
            max_jitter: options.max_jitter,
        })?;
        let lengthscales: Vec<f64> = log_ls.iter().map(|v| v.exp()).collect();
        let profiled = profiled_nll(options.family, &lengthscales, &inputs, &targets, &options).ok_or(
            GpError::Singular {
                max_jitter: options.max_jitter,
            },
        )?;
        let kernel = KernelConfig::new(options.family, lengthscales, profiled.signal_variance, options.jitter);
        Self::condition(data, kernel, scaling, options)
    }

    /// Condition on `data` with fixed hyperparameters and standardization.
    /// The jitter is escalated if the factorization fails.
    pub fn with_hyperparameters(
        data: TrainingSet,
        kernel: KernelConfig,
        scaling: Standardization,
    ) -> Result<Self, GpError> {
        let options = FitOptions {
            family: kernel.family,
            jitter: kernel.noise_jitter,
            max_jitter: FitOptions::default().max_jitter.max(kernel.noise_jitter),
            ..FitOptions::default()
        };
        Self::condition(data, kernel, scaling, options)
    }

    fn condition(
        data: TrainingSet,
        mut kernel: KernelConfig,
        scaling: Standardization,
        options: FitOptions,
    ) -> Result<Self, GpError> {
        kernel.validate()?;
        if kernel.lengthscales.len() != data.dim() || scaling.input_mean.len() != data.dim() {
            return Err(GpError::DimensionMismatch {
                expected: data.dim(),
                got: kernel.lengthscales.len(),
            });
        }
        let inputs: Vec<Vec<f64>> = data.inputs().iter().map(|x| scaling.input(x)).collect();
        let targets = DVector::from_iterator(data.len(), data.targets().iter().map(|t| scaling.target(*t)));
        let (factor, jitter) = factorize(
            kernel.family,
            &kernel.lengthscales,
            kernel.signal_variance,
            &inputs,
            kernel.noise_jitter,
            options.max_jitter.max(kernel.noise_jitter),
        )?;
        kernel.noise_jitter = jitter;
        let alpha = solve_factor(&factor, &targets);
        let nll = 0.5 * log_det(&factor) + 0.5 * targets.dot(&alpha) + 0.5 * targets.len() as f64 * LN_2PI;
        let targets_len = targets.len();
        Ok(Self {
            kernel,
            data,
            scaling,
            options,
            inputs,
            targets,
            factor,
            alpha,
            nll,
            estimated_at: targets_len,
        })
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }

    pub fn standardization(&self) -> &Standardization {
        &self.scaling
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = K(X, X) + jitter` in
    /// standardized units.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Negative log marginal likelihood of the standardized targets.
    pub fn nll(&self) -> f64 {
        self.nll
    }

    /// Training-set size when the hyperparameters were last estimated or set.
    pub fn estimated_at(&self) -> usize {
        self.estimated_at
    }

    /// Posterior mean and standard deviation in raw target units.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        if x.len() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let z = self.scaling.input(x);
        let kstar = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.covariance(&z, xi)));
        let mean = kstar.dot(&self.alpha);
        let v = self
            .factor
            .solve_lower_triangular(&kstar)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.kernel.signal_variance - v.norm_squared()).max(0.0);
        Ok(Prediction {
            mean: self.scaling.target_mean + self.scaling.target_scale * mean,
            std: self.scaling.target_scale * var.sqrt(),
        })
    }

    /// Add one observation. With `reoptimize`, and once the training set has
    /// grown by `refit_growth` since the last estimate, the hyperparameters
    /// and standardization are re-estimated (warm-started from the current
    /// lengthscales); otherwise both are kept and the factor is extended by
    /// one row.
    pub fn add_point_and_retrain(&self, x: &[f64], target: f64, reoptimize: bool) -> Result<Retrained, GpError> {
        if x.len() != self.dim() {
            return Err(GpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || !target.is_finite() {
            return Err(GpError::NonFinite);
        }
        if self.data.contains(x) {
            log::warn!("skipping duplicate training point {x:?}");
            return Ok(Retrained {
                gp: self.clone(),
                warning: Some(GpWarning::DuplicatePoint),
            });
        }
        let mut data = self.data.clone();
        data.push_unchecked(x.to_vec(), target);
        let due = data.len() as f64 >= (1.0 + self.options.refit_growth) * self.estimated_at as f64;
        let gp = if reoptimize && due {
            Self::fit_from(data, self.options.clone(), Some(&self.kernel.lengthscales))?
        } else {
            self.extend(data)?
        };
        Ok(Retrained { gp, warning: None })
    }

    /// Rank-one extension of the factor for the last point of `data`.
    fn extend(&self, data: TrainingSet) -> Result<Self, GpError> {
        let n = self.inputs.len();
        let z = self.scaling.input(data.inputs().last().expect("non-empty"));
        let y = self.scaling.target(*data.targets().last().expect("non-empty"));
        let kvec = DVector::from_iterator(n, self.inputs.iter().map(|xi| self.kernel.covariance(&z, xi)));
        let row = self
            .factor
            .solve_lower_triangular(&kvec)
            .expect("Cholesky factor has a positive diagonal");
        let diag2 = self.kernel.signal_variance * (1.0 + self.kernel.noise_jitter) - row.norm_squared();
        if diag2.is_nan() || diag2 <= 0.0 {
            // lost positive definiteness: refactorize with escalation
            return Self::condition(data, self.kernel.clone(), self.scaling.clone(), self.options.clone());
        }
        let mut factor = self.factor.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            factor[(n, j)] = row[j];
        }
        factor[(n, n)] = diag2.sqrt();
        let mut inputs = self.inputs.clone();
        inputs.push(z);
        let targets = self.targets.clone().push(y);
        let alpha = solve_factor(&factor, &targets);
        let nll = 0.5 * log_det(&factor) + 0.5 * targets.dot(&alpha) + 0.5 * targets.len() as f64 * LN_2PI;
        Ok(Self {
            kernel: self.kernel.clone(),
            data,
            scaling: self.scaling.clone(),
            options: self.options.clone(),
            inputs,
            targets,
            factor,
            alpha,
            nll,
            estimated_at: self.estimated_at,
        })
    }
}
