//! Analytical benchmark problems with two standard-normal inputs and failure
//! defined as a response `≤ 0`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gp::FitOptions;
use crate::model::{Model, ModelError, ModelHandle};
use crate::probability::CostModel;
use crate::surrogate::{EnsembleSpec, Strategy};

/// `6/√2`, the offset of the two linear four-branch limit states.
const LINEAR_OFFSET: f64 = 6.0 * FRAC_1_SQRT_2;

fn check_arity(x: &[f64], n: usize) -> Result<(), ModelError> {
    if x.len() == n {
        Ok(())
    } else {
        Err(ModelError::Arity {
            expected: n,
            got: x.len(),
        })
    }
}

/// Branch `i` (1-based) of the four-branch function.
pub fn four_branch_lf(i: usize, x: &[f64]) -> Result<f64, ModelError> {
    check_arity(x, 2)?;
    let (x1, x2) = (x[0], x[1]);
    let quad = 3.0 + (x1 - x2) * (x1 - x2) / 10.0;
    match i {
        1 => Ok(quad - (x1 + x2) * FRAC_1_SQRT_2),
        2 => Ok(quad + (x1 + x2) * FRAC_1_SQRT_2),
        3 => Ok(x1 - x2 + LINEAR_OFFSET),
        4 => Ok(x2 - x1 + LINEAR_OFFSET),
        _ => Err(ModelError::BadIndex(i)),
    }
}

/// Minimum over the four branches.
pub fn four_branch_hf(x: &[f64]) -> Result<f64, ModelError> {
    (1..=4).try_fold(f64::INFINITY, |m, i| Ok(m.min(four_branch_lf(i, x)?)))
}

fn rastrigin_term(v: f64) -> f64 {
    v * v - 5.0 * (2.0 * PI * v).cos()
}

/// `10 − Σ (x_i² − 5 cos 2πx_i)` over two inputs.
pub fn rastrigin_hf(x: &[f64]) -> Result<f64, ModelError> {
    check_arity(x, 2)?;
    Ok(10.0 - rastrigin_term(x[0]) - rastrigin_term(x[1]))
}

/// Low-fidelity Rastrigin models. Type 1 splits the sum by coordinate and
/// model `i` takes only `x_i` (a one-element slice). Type 2 separates the
/// quadratic and cosine terms and takes both inputs.
pub fn rastrigin_lf(kind: u8, i: usize, x: &[f64]) -> Result<f64, ModelError> {
    match (kind, i) {
        (1, 1 | 2) => {
            check_arity(x, 1)?;
            Ok(10.0 - rastrigin_term(x[0]))
        }
        (2, 1) => {
            check_arity(x, 2)?;
            Ok(10.0 - x[0] * x[0] - x[1] * x[1])
        }
        (2, 2) => {
            check_arity(x, 2)?;
            Ok(10.0 + 5.0 * (2.0 * PI * x[0]).cos() + 5.0 * (2.0 * PI * x[1]).cos())
        }
        (1 | 2, _) => Err(ModelError::BadIndex(i)),
        _ => Err(ModelError::Failed(format!("unknown Rastrigin type {kind}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    FourBranch,
    RastriginType1,
    RastriginType2,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::FourBranch, Benchmark::RastriginType1, Benchmark::RastriginType2];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::FourBranch => "four_branch",
            Benchmark::RastriginType1 => "rastrigin_type1",
            Benchmark::RastriginType2 => "rastrigin_type2",
        }
    }

    pub fn dimension(self) -> usize {
        2
    }

    /// Failure is `response ≤ failure_threshold`.
    pub fn failure_threshold(self) -> f64 {
        0.0
    }

    pub fn n_lf_models(self) -> usize {
        match self {
            Benchmark::FourBranch => 4,
            Benchmark::RastriginType1 | Benchmark::RastriginType2 => 2,
        }
    }

    pub fn hf(self, x: &[f64]) -> Result<f64, ModelError> {
        match self {
            Benchmark::FourBranch => four_branch_hf(x),
            Benchmark::RastriginType1 | Benchmark::RastriginType2 => rastrigin_hf(x),
        }
    }

    /// Handles for the high-fidelity model and each low-fidelity model, all
    /// with unit cost.
    pub fn handles(self) -> (ModelHandle, Vec<ModelHandle>) {
        let hf = ModelHandle::full(0, "hf", Arc::new(BenchmarkModel { bench: self, index: 0 }), 2);
        let lfs = (1..=self.n_lf_models())
            .map(|i| {
                let projection = match self {
                    Benchmark::RastriginType1 => vec![i - 1],
                    _ => vec![0, 1],
                };
                ModelHandle::new(
                    i,
                    format!("lf{i}"),
                    Arc::new(BenchmarkModel { bench: self, index: i }),
                    projection,
                )
            })
            .collect();
        (hf, lfs)
    }

    pub fn ensemble_spec(self, strategy: Strategy, fit: FitOptions) -> EnsembleSpec {
        let (hf, lfs) = self.handles();
        EnsembleSpec {
            input_dim: self.dimension(),
            cost: CostModel::uniform(lfs.len()),
            hf,
            lfs,
            strategy,
            fit,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}` (expected four_branch, rastrigin_type1 or rastrigin_type2)"))
    }
}

/// Model `index` of a benchmark; 0 is the high-fidelity model.
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkModel {
    pub bench: Benchmark,
    pub index: usize,
}

impl Model for BenchmarkModel {
    fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        match (self.bench, self.index) {
            (b, 0) => b.hf(x),
            (Benchmark::FourBranch, i) => four_branch_lf(i, x),
            (Benchmark::RastriginType1, i) => rastrigin_lf(1, i, x),
            (Benchmark::RastriginType2, i) => rastrigin_lf(2, i, x),
        }
    }
}
