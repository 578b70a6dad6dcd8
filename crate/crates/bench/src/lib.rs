//! Fixtures shared by the benchmarks.

use lfmc_core::gp::TrainingSet;
use lfmc_core::probability::FoldedGaussianParams;

/// `n` deterministic, well-spread 2-D points with a smooth response.
pub fn training_set(n: usize) -> TrainingSet {
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = i as f64;
            vec![3.0 * (0.618_033_988_7 * t).fract() - 1.5, 3.0 * (0.754_877_666_2 * t).fract() - 1.5]
        })
        .collect();
    let ys = xs.iter().map(|x| (2.0 * x[0]).sin() + 0.3 * x[1] * x[1]).collect();
    TrainingSet::new(xs, ys).expect("distinct points")
}

/// Correction distributions for `n` models with overlapping magnitudes.
pub fn folded_params(n: usize) -> Vec<FoldedGaussianParams> {
    (0..n)
        .map(|i| FoldedGaussianParams::new(0.2 * i as f64 - 0.3, 0.1 + 0.15 * i as f64))
        .collect()
}
