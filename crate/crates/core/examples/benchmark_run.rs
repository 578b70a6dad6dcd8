//! Run one analytical benchmark and print the estimate.
//!
//! `cargo run --release --example benchmark_run -- four_branch lfds 20000 1`

use std::time::Instant;

use lfmc_core::benchmarks::Benchmark;
use lfmc_core::gp::FitOptions;
use lfmc_core::inputs::JointDistribution;
use lfmc_core::subset::{run, RunConfig};
use lfmc_core::surrogate::Strategy;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let bench: Benchmark = args.get(1).map_or("four_branch", String::as_str).parse().expect("benchmark");
    let strategy: Strategy = args.get(2).map_or("lfds", String::as_str).parse().expect("strategy");
    let n_pts: usize = args.get(3).map_or(Ok(20_000), |s| s.parse()).expect("n_pts");
    let seed: u64 = args.get(4).map_or(Ok(1), |s| s.parse()).expect("seed");

    let stride: usize = args.get(5).map_or(Ok(1), |s| s.parse()).expect("stride");
    let cfg = RunConfig {
        n_pts,
        seed,
        reoptimize_stride: stride,
        ..RunConfig::default()
    };
    let inputs = JointDistribution::standard_normal(bench.dimension());
    let start = Instant::now();
    let est = run(bench.ensemble_spec(strategy, FitOptions::default()), &inputs, &cfg).expect("run");
    println!(
        "{bench} {strategy} seed {seed}: p_f {:.4e} cov {:.4} subsets {} hf {} ({:.3}%) lf {:?} in {:.1?}",
        est.p_f,
        est.cov,
        est.n_subsets,
        est.total_hf_calls,
        100.0 * est.hf_fraction(),
        est.lf_calls,
        start.elapsed()
    );
}
