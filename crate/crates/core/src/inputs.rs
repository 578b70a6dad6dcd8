//! Joint input distributions, represented as a map from independent standard
//! normals to physical inputs (optionally through a Gaussian copula).

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probability::standard_normal_cdf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InputError {
    #[error("marginal {index} is invalid: {reason}")]
    Marginal { index: usize, reason: String },
    #[error("correlation matrix must be {dim}x{dim}, symmetric, unit-diagonal and positive definite")]
    Correlation { dim: usize },
    #[error("at least one input is required")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, std: f64 },
    /// `exp(N(mu, sigma²))`.
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Marginal {
    pub const STANDARD_NORMAL: Marginal = Marginal::Normal { mean: 0.0, std: 1.0 };

    fn validate(&self, index: usize) -> Result<(), InputError> {
        let bad = |reason: &str| {
            Err(InputError::Marginal {
                index,
                reason: reason.into(),
            })
        };
        match *self {
            Marginal::Normal { mean, std } if !(mean.is_finite() && std.is_finite() && std > 0.0) => {
                bad("normal needs finite mean and positive std")
            }
            Marginal::Lognormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) => {
                bad("lognormal needs finite mu and positive sigma")
            }
            Marginal::Uniform { lower, upper } if !(lower.is_finite() && upper.is_finite() && lower < upper) => {
                bad("uniform needs finite lower < upper")
            }
            _ => Ok(()),
        }
    }

    /// Physical value for a standard-normal `z`.
    pub fn from_standard_normal(&self, z: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => mean + std * z,
            Marginal::Lognormal { mu, sigma } => (mu + sigma * z).exp(),
            Marginal::Uniform { lower, upper } => lower + (upper - lower) * standard_normal_cdf(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    marginals: Vec<Marginal>,
    correlation: Option<Vec<Vec<f64>>>,
    factor: Option<DMatrix<f64>>,
}

impl JointDistribution {
    pub fn new(marginals: Vec<Marginal>, correlation: Option<Vec<Vec<f64>>>) -> Result<Self, InputError> {
        if marginals.is_empty() {
            return Err(InputError::Empty);
        }
        for (i, m) in marginals.iter().enumerate() {
            m.validate(i)?;
        }
        let dim = marginals.len();
        let factor = match &correlation {
            None => None,
            Some(rows) => {
                let ok_shape = rows.len() == dim && rows.iter().all(|r| r.len() == dim);
                if !ok_shape {
                    return Err(InputError::Correlation { dim });
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                let symmetric = (0..dim).all(|i| m[(i, i)] == 1.0 && (0..i).all(|j| m[(i, j)] == m[(j, i)]));
                if !symmetric {
                    return Err(InputError::Correlation { dim });
                }
                Some(Cholesky::new(m).ok_or(InputError::Correlation { dim })?.unpack())
            }
        };
        Ok(Self {
            marginals,
            correlation,
            factor,
        })
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self {
            marginals: vec![Marginal::STANDARD_NORMAL; dim],
            correlation: None,
            factor: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn correlation(&self) -> Option<&[Vec<f64>]> {
        self.correlation.as_deref()
    }

    /// Map independent standard normals `u` to physical inputs.
    pub fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        match &self.factor {
            None => self
                .marginals
                .iter()
                .zip(u)
                .map(|(m, z)| m.from_standard_normal(*z))
                .collect(),
            Some(l) => {
                let z = l * DVector::from_column_slice(u);
                self.marginals
                    .iter()
                    .zip(z.iter())
                    .map(|(m, z)| m.from_standard_normal(*z))
                    .collect()
            }
        }
    }
}
