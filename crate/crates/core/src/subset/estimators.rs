//! Failure-probability and coefficient-of-variation estimators built on the
//! probability of point failure.
//!
//! Per-subset arrays are flat and chain-major: entry `l * n_spc + m` is
//! sample `m` of chain `l`.

use crate::probability::standard_normal_cdf;

/// Probability that a sample truly fails given the surrogate's verdict and
/// its learning-function value. `u = ∞` (an HF response) gives the
/// indicator exactly.
pub fn point_failure_probability(u: f64, predicted_failure: bool) -> f64 {
    if u == f64::INFINITY {
        return if predicted_failure { 1.0 } else { 0.0 };
    }
    if predicted_failure {
        standard_normal_cdf(u)
    } else {
        standard_normal_cdf(-u)
    }
}

/// Point-failure probabilities of stored responses against `threshold`.
pub fn point_failure_probabilities(responses: &[f64], u_values: &[f64], threshold: f64) -> Vec<f64> {
    responses
        .iter()
        .zip(u_values)
        .map(|(r, u)| point_failure_probability(*u, *r <= threshold))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// COV of the first-subset estimator (independent samples).
pub fn first_subset_cov(p: f64, n_pts: usize) -> f64 {
    ((1.0 - p) / (p * n_pts as f64)).sqrt()
}

/// Lag-`lag` autocovariance of point-failure probabilities along chains.
pub fn autocovariance(pf: &[f64], n_chains: usize, n_spc: usize, lag: usize, p: f64) -> f64 {
    debug_assert_eq!(pf.len(), n_chains * n_spc);
    if lag == 0 {
        return p * (1.0 - p);
    }
    let mut sum = 0.0;
    for l in 0..n_chains {
        let chain = &pf[l * n_spc..(l + 1) * n_spc];
        for m in 0..n_spc - lag {
            sum += chain[m] * chain[m + lag];
        }
    }
    sum / (n_chains * n_spc - lag * n_chains) as f64 - p * p
}

/// Correlation factor `γ = 2 Σ_{λ=1}^{n_spc−1} (1 − λ/n_spc) ρ(λ)`, with
/// `ρ = 0` when `R(0) = 0`.
pub fn correlation_factor(pf: &[f64], n_chains: usize, n_spc: usize, p: f64) -> f64 {
    let r0 = p * (1.0 - p);
    if r0 == 0.0 {
        return 0.0;
    }
    let mut gamma = 0.0;
    for lag in 1..n_spc {
        let rho = autocovariance(pf, n_chains, n_spc, lag, p) / r0;
        gamma += (1.0 - lag as f64 / n_spc as f64) * rho;
    }
    2.0 * gamma
}

/// COV of a conditional (MCMC) subset estimator.
pub fn intermediate_subset_cov(p: f64, n_pts: usize, gamma: f64) -> f64 {
    ((1.0 - p) / (p * n_pts as f64) * (1.0 + gamma)).sqrt()
}

/// `(P, δ, γ)` for a subset's point-failure probabilities.
pub fn subset_estimate(pf: &[f64], n_chains: usize, n_spc: usize, first: bool) -> (f64, f64, f64) {
    let p = mean(pf);
    if first {
        (p, first_subset_cov(p, pf.len()), 0.0)
    } else {
        let gamma = correlation_factor(pf, n_chains, n_spc, p);
        (p, intermediate_subset_cov(p, pf.len(), gamma), gamma)
    }
}

/// Product of conditional probabilities and root-sum-square of COVs.
pub fn combine(subsets: &[(f64, f64)]) -> (f64, f64) {
    let p_f = subsets.iter().map(|(p, _)| p).product();
    let cov = subsets.iter().map(|(_, d)| d * d).sum::<f64>().sqrt();
    (p_f, cov)
}

/// Linearly interpolated empirical quantile of sorted data, at position
/// `(n − 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty data");
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}
