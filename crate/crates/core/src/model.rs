//! Model handles: anything that maps an input vector to a scalar response.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model evaluation failed: {0}")]
    Failed(String),
    #[error("model returned a non-finite value {0}")]
    NonFinite(f64),
    #[error("expected {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("unknown model index {0}")]
    BadIndex(usize),
}

/// A deterministic response function. Implementations must be thread-safe.
pub trait Model: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError>;
}

/// Adapter for plain closures.
pub struct FnModel<F>(pub F);

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok((self.0)(x))
    }
}

/// A model together with the global input components it reads and its
/// relative cost.
#[derive(Clone)]
pub struct ModelHandle {
    pub id: usize,
    pub name: String,
    pub evaluator: Arc<dyn Model>,
    /// Indices into the global input vector, in the order the model expects.
    pub projection: Vec<usize>,
    pub tau: f64,
}

impl fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelHandle")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("projection", &self.projection)
            .field("tau", &self.tau)
            .finish_non_exhaustive()
    }
}

impl ModelHandle {
    pub fn new(id: usize, name: impl Into<String>, evaluator: Arc<dyn Model>, projection: Vec<usize>) -> Self {
        Self {
            id,
            name: name.into(),
            evaluator,
            projection,
            tau: 1.0,
        }
    }

    /// Handle reading every component of a `dim`-dimensional input.
    pub fn full(id: usize, name: impl Into<String>, evaluator: Arc<dyn Model>, dim: usize) -> Self {
        Self::new(id, name, evaluator, (0..dim).collect())
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn projection_is_valid(&self, dim: usize) -> bool {
        !self.projection.is_empty() && self.projection.iter().all(|&i| i < dim)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.projection.iter().map(|&i| x[i]).collect()
    }

    /// Evaluate at a global input vector; non-finite responses are errors.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        let v = self.evaluator.evaluate(&self.project(x))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ModelError::NonFinite(v))
        }
    }
}
