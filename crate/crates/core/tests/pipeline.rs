use std::sync::Arc;

use lfmc_core::probability::{cost_biased_probabilities, FoldedGaussianParams};
use lfmc_core::{
    run, Benchmark, CostModel, EnsembleSpec, FitOptions, FnModel, JointDistribution, Marginal, ModelHandle, RunConfig,
    Runner, Strategy,
};

fn small(seed: u64) -> RunConfig {
    RunConfig {
        n_pts: 2_000,
        n_chains: Some(200),
        seed,
        ..RunConfig::default()
    }
}

#[test]
fn benchmark_runs_respect_invariants() {
    for bench in Benchmark::ALL {
        let inputs = JointDistribution::standard_normal(bench.dimension());
        let est = run(bench.ensemble_spec(Strategy::Lfds, FitOptions::default()), &inputs, &small(21)).unwrap();
        assert!(est.converged);
        let mut previous = f64::INFINITY;
        for r in &est.records {
            assert!(r.threshold <= previous);
            previous = r.threshold;
            assert!(r.u_values.iter().all(|&u| u >= 2.0), "{bench}");
            assert_eq!(r.len(), 2_000);
        }
        assert_eq!(previous, 0.0);
        let product: f64 = est.records.iter().map(|r| r.cond_prob).product();
        assert_eq!(est.p_f, product);
        assert!(est.p_f > 0.0 && est.p_f < 0.2, "{bench}: {}", est.p_f);
    }
}

#[test]
fn runner_phases_match_one_shot_run() {
    let bench = Benchmark::FourBranch;
    let inputs = JointDistribution::standard_normal(2);
    let cfg = small(4);
    let whole = run(bench.ensemble_spec(Strategy::Lfss, FitOptions::default()), &inputs, &cfg).unwrap();

    let mut runner = Runner::initialize(bench.ensemble_spec(Strategy::Lfss, FitOptions::default()), &inputs, &cfg).unwrap();
    let first = runner.run_first_subset().unwrap();
    assert_eq!(first, whole.records[0]);
    let second = runner.run_subsequent_subset(&first).unwrap();
    assert_eq!(second, whole.records[1]);
}

/// Failure when `ln X₁ + X₂ ≥ 3` with `X₁` lognormal and `X₂` normal,
/// correlated through a Gaussian copula: the sum is normal with known
/// moments.
#[test]
fn correlated_non_normal_inputs() {
    let rho: f64 = 0.5;
    let inputs = JointDistribution::new(
        vec![
            Marginal::Lognormal { mu: 0.0, sigma: 1.0 },
            Marginal::Normal { mean: 0.0, std: 1.0 },
        ],
        Some(vec![vec![1.0, rho], vec![rho, 1.0]]),
    )
    .unwrap();
    let hf = |x: &[f64]| 3.0 - x[0].ln() - x[1];
    let spec = EnsembleSpec {
        input_dim: 2,
        hf: ModelHandle::full(0, "hf", Arc::new(FnModel(hf)), 2),
        lfs: vec![
            ModelHandle::full(1, "shifted", Arc::new(FnModel(move |x: &[f64]| hf(x) + 0.2)), 2),
            ModelHandle::full(2, "linearized", Arc::new(FnModel(|x: &[f64]| 3.0 - (x[0] - 1.0) - x[1])), 2),
        ],
        cost: CostModel::uniform(2),
        strategy: Strategy::Lfds,
        fit: FitOptions::default(),
    };
    let est = run(spec, &inputs, &small(8)).unwrap();
    let sd = (2.0 + 2.0 * rho).sqrt();
    let truth = lfmc_core::probability::standard_normal_cdf(-3.0 / sd);
    assert!(
        (est.p_f - truth).abs() < 3.0 * est.p_f * est.cov,
        "{} vs {truth} (cov {})",
        est.p_f,
        est.cov
    );
}

#[test]
fn cost_bias_moves_probability_to_cheap_models() {
    let params = [FoldedGaussianParams::new(0.1, 0.3), FoldedGaussianParams::new(0.1, 0.3)];
    let fair = cost_biased_probabilities(&params, &CostModel::new(&[1.0, 10.0], 0.0).unwrap()).unwrap();
    let biased = cost_biased_probabilities(&params, &CostModel::new(&[1.0, 10.0], 1.0).unwrap()).unwrap();
    assert!((fair.values[0] - 0.5).abs() < 1e-9);
    assert!(biased.values[0] > 0.8, "{:?}", biased.values);
}

#[test]
fn biased_lfds_prefers_the_cheap_model() {
    let inputs = JointDistribution::standard_normal(2);
    let count_selected = |beta: f64| {
        let mut spec = Benchmark::RastriginType2.ensemble_spec(Strategy::Lfds, FitOptions::default());
        spec.cost = CostModel::new(&[1.0, 50.0], beta).unwrap();
        let est = run(spec, &inputs, &small(5)).unwrap();
        est.lf_calls[0] as f64 / est.lf_calls.iter().sum::<usize>() as f64
    };
    let unbiased = count_selected(0.0);
    let biased = count_selected(1.0);
    assert!(biased > unbiased, "{biased} <= {unbiased}");
}
