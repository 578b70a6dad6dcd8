use std::sync::Arc;

use super::*;
use crate::benchmarks::Benchmark;
use crate::gp::FitOptions;
use crate::model::{FnModel, ModelHandle};
use crate::probability::CostModel;
use crate::surrogate::Strategy;

fn linear_spec(a: f64, strategy: Strategy) -> EnsembleSpec {
    EnsembleSpec {
        input_dim: 1,
        hf: ModelHandle::full(0, "hf", Arc::new(FnModel(move |x: &[f64]| a - x[0])), 1),
        lfs: vec![
            ModelHandle::full(1, "lf1", Arc::new(FnModel(move |x: &[f64]| a - x[0] + 0.3 * x[0].sin())), 1),
            ModelHandle::full(2, "lf2", Arc::new(FnModel(move |x: &[f64]| a - 1.1 * x[0])), 1),
        ],
        cost: CostModel::uniform(2),
        strategy,
        fit: FitOptions::default(),
    }
}

fn small_config(seed: u64) -> RunConfig {
    RunConfig {
        n_init: 10,
        n_pts: 1000,
        n_chains: Some(100),
        seed,
        ..RunConfig::default()
    }
}

#[test]
fn initial_phase_trains_every_correction() {
    let inputs = JointDistribution::standard_normal(2);
    let spec = Benchmark::FourBranch.ensemble_spec(Strategy::Lfds, FitOptions::default());
    let runner = Runner::initialize(spec, &inputs, &RunConfig::default()).unwrap();
    assert_eq!(runner.hf_calls(), 20);
    assert_eq!(runner.lf_calls(), &[20, 20, 20, 20]);
    for g in runner.ensemble().corrections() {
        assert_eq!(g.len(), 20);
    }
}

#[test]
fn initial_targets_are_hf_minus_lf() {
    let inputs = JointDistribution::standard_normal(1);
    let cfg = RunConfig {
        n_init: 2,
        ..small_config(4)
    };
    let runner = Runner::initialize(linear_spec(2.0, Strategy::Lfds), &inputs, &cfg).unwrap();
    let g = &runner.ensemble().corrections();
    for (x, t) in g[0].data().inputs().iter().zip(g[0].data().targets()) {
        assert!((t - (-0.3 * x[0].sin())).abs() < 1e-15);
    }
    for (x, t) in g[1].data().inputs().iter().zip(g[1].data().targets()) {
        assert!((t - 0.1 * x[0]).abs() < 1e-15);
    }
}

#[test]
fn exact_low_fidelity_model_gets_zero_correction() {
    let inputs = JointDistribution::standard_normal(1);
    let mut spec = linear_spec(2.0, Strategy::Lfds);
    spec.lfs[0] = ModelHandle::full(1, "exact", Arc::new(FnModel(|x: &[f64]| 2.0 - x[0])), 1);
    let runner = Runner::initialize(spec, &inputs, &small_config(1)).unwrap();
    let g = &runner.ensemble().corrections()[0];
    assert!(g.data().targets().iter().all(|t| *t == 0.0));
    let p = g.predict(&[0.37]).unwrap();
    assert!(p.mean.abs() < 1e-12 && p.std < 1e-6, "{p:?}");
}

#[test]
fn high_threshold_stops_after_one_subset() {
    let inputs = JointDistribution::standard_normal(1);
    let cfg = RunConfig {
        failure_threshold: 2.5,
        ..small_config(3)
    };
    let est = run(linear_spec(2.0, Strategy::Lfds), &inputs, &cfg).unwrap();
    assert_eq!(est.n_subsets, 1);
    let r = &est.records[0];
    assert_eq!(r.threshold, 2.5);
    assert_eq!(est.p_f, r.cond_prob);
    assert_eq!(est.cov, r.delta);
    assert!(r.seed_indices.is_empty());
}

#[test]
fn run_invariants_on_linear_toy() {
    let inputs = JointDistribution::standard_normal(1);
    for strategy in [Strategy::Lfma, Strategy::Lfds, Strategy::Lfss] {
        let est = run(linear_spec(2.0, strategy), &inputs, &small_config(9)).unwrap();
        assert!(est.converged);
        let mut previous = f64::INFINITY;
        for r in &est.records {
            assert!(r.u_values.iter().all(|u| *u >= 2.0));
            assert!(r.threshold <= previous);
            previous = r.threshold;
            let (p, d, g) = r.recompute_estimate();
            assert_eq!((p, d, g), (r.cond_prob, r.delta, r.gamma));
            assert_eq!(r.len(), 1000);
            for (i, &hf) in r.hf_flags.iter().enumerate() {
                assert!(!hf || r.u_values[i] == f64::INFINITY);
            }
        }
        assert_eq!(est.records.last().unwrap().threshold, 0.0);
        let total: usize = est.n_init + est.records.iter().map(|r| r.hf_calls).sum::<usize>();
        assert_eq!(total, est.total_hf_calls);
        let evaluated: usize = est
            .records
            .iter()
            .flat_map(|r| r.lf_mask.iter())
            .map(|m| m.count_ones() as usize)
            .sum();
        assert_eq!(evaluated + 2 * est.n_init, est.lf_calls.iter().sum::<usize>());
        let truth = 0.022_750_131_948_179_21;
        assert!(
            (est.p_f - truth).abs() < 3.0 * est.p_f * est.cov,
            "{strategy}: {} vs {truth} (cov {})",
            est.p_f,
            est.cov
        );
    }
}

#[test]
fn lf_call_pattern_follows_strategy() {
    let inputs = JointDistribution::standard_normal(1);
    for (strategy, per_point) in [(Strategy::Lfma, 2), (Strategy::Lfds, 1), (Strategy::Lfss, 1)] {
        let est = run(linear_spec(3.0, strategy), &inputs, &small_config(2)).unwrap();
        for r in &est.records {
            for (i, m) in r.lf_mask.iter().enumerate() {
                let fresh = r.is_first() || *m != 0;
                if fresh {
                    assert_eq!(m.count_ones(), per_point, "{strategy} entry {i}");
                }
                if strategy == Strategy::Lfma {
                    assert_eq!(r.selected_model[i], None);
                } else {
                    assert!(r.selected_model[i].is_some());
                }
            }
        }
    }
}

#[test]
fn seeds_are_lowest_responses() {
    let inputs = JointDistribution::standard_normal(1);
    let est = run(linear_spec(3.0, Strategy::Lfds), &inputs, &small_config(5)).unwrap();
    let r = &est.records[0];
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r.responses[a].total_cmp(&r.responses[b]).then(a.cmp(&b)));
    assert_eq!(r.seed_indices, order[..100].to_vec());
    assert!(r.seed_indices.iter().all(|&i| r.responses[i] <= r.threshold));
}

#[test]
fn same_seed_same_result() {
    let inputs = JointDistribution::standard_normal(1);
    let a = run(linear_spec(2.5, Strategy::Lfss), &inputs, &small_config(7)).unwrap();
    let b = run(linear_spec(2.5, Strategy::Lfss), &inputs, &small_config(7)).unwrap();
    assert_eq!(a, b);
    let c = run(linear_spec(2.5, Strategy::Lfss), &inputs, &small_config(8)).unwrap();
    assert_ne!(a.p_f, c.p_f);
}

#[test]
fn non_convergence_carries_partial_results() {
    let inputs = JointDistribution::standard_normal(1);
    let cfg = RunConfig {
        max_subsets: 1,
        ..small_config(1)
    };
    match run(linear_spec(3.0, Strategy::Lfds), &inputs, &cfg) {
        Err(RunError::NonConvergence { max_subsets, partial }) => {
            assert_eq!(max_subsets, 1);
            assert_eq!(partial.n_subsets, 1);
            assert!(!partial.converged);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn config_validation() {
    let ok = small_config(0);
    assert!(ok.validate(1).is_ok());
    let cases = [
        RunConfig { n_init: 1, ..ok.clone() },
        RunConfig { n_chains: Some(300), ..ok.clone() },
        RunConfig { n_chains: Some(200), ..ok.clone() },
        RunConfig { pi_target: 1.0, ..ok.clone() },
        RunConfig { u_threshold: 0.0, ..ok.clone() },
        RunConfig { proposal_scale: vec![1.0, 1.0], ..ok.clone() },
        RunConfig { proposal_scale: vec![-1.0], ..ok.clone() },
        RunConfig { failure_threshold: f64::NAN, ..ok.clone() },
        RunConfig { max_subsets: 0, ..ok.clone() },
    ];
    for c in cases {
        assert!(matches!(c.validate(1), Err(RunError::Config(_))), "{c:?}");
    }
    assert_eq!(RunConfig { n_chains: None, ..ok }.n_chains(), 100);
}

#[test]
fn dimension_mismatch_rejected() {
    let inputs = JointDistribution::standard_normal(2);
    assert!(matches!(
        Runner::initialize(linear_spec(2.0, Strategy::Lfds), &inputs, &small_config(0)),
        Err(RunError::Config(_))
    ));
}

#[test]
fn infinite_u_threshold_uses_hf_everywhere() {
    let inputs = JointDistribution::standard_normal(1);
    let cfg = RunConfig {
        u_threshold: f64::INFINITY,
        ..small_config(6)
    };
    let est = run(linear_spec(2.0, Strategy::Lfds), &inputs, &cfg).unwrap();
    assert_eq!(est.lf_calls, vec![10, 10]);
    for r in &est.records {
        assert!(r.hf_flags.iter().all(|&h| h));
        assert!(r.point_failure.iter().all(|&p| p == 0.0 || p == 1.0));
        assert!(r.selected_model.iter().all(Option::is_none));
    }
    let evaluated: usize = est.records.iter().map(|r| r.hf_called.iter().filter(|&&c| c).count()).sum();
    assert_eq!(est.total_hf_calls, est.n_init + evaluated);
}
