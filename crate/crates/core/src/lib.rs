//! Multi-fidelity surrogate subset simulation.
//!
//! A set of cheap low-fidelity models, each corrected towards an expensive
//! high-fidelity model by a Gaussian process, is combined point by point
//! according to local model probabilities. The combined surrogate drives
//! subset simulation and is replaced by the high-fidelity model wherever its
//! classification of a sample is uncertain.

mod optim;
pub mod benchmarks;
pub mod gp;
pub mod inputs;
pub mod model;
pub mod probability;
pub mod quadrature;
pub mod rng;
pub mod subset;
pub mod surrogate;

pub use benchmarks::Benchmark;
pub use gp::{FitOptions, GaussianProcess, GpError, KernelFamily};
pub use inputs::{InputError, JointDistribution, Marginal};
pub use model::{FnModel, Model, ModelError, ModelHandle};
pub use probability::{CostModel, ProbabilityError};
pub use rng::StreamSplitter;
pub use subset::{run, FailureEstimate, RunConfig, RunError, Runner, SubsetRecord, SubsetSummary};
pub use surrogate::{EnsembleSpec, ModelEnsemble, Strategy, SurrogateError, SurrogateEvaluation};
