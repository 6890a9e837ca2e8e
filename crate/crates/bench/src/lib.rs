//! Fixtures shared by the benchmarks.

use betacpd::model::{simulate_process, ExogenousSpec, GBetaArModel};
use betacpd::monitor::{AChoice, MonitorPlan};
use betacpd::stat::{self, CovKernel, QuantileGrid};

/// No-change series from the Beta AR(3) benchmark model.
pub fn null_series(n: usize, seed: u64) -> Vec<f64> {
    let model = GBetaArModel::new(0.5, vec![0.1, 0.2, 0.2], vec![0.5], 100.0).expect("valid model");
    let exog = ExogenousSpec::new(vec![-0.1], vec![], 1.0, 500).expect("valid exogenous spec");
    simulate_process(&model, &exog, n, 500, seed).expect("simulation").x
}

/// Grid and kernel estimated from `sample`.
pub fn grid_and_kernel(sample: &[f64], d: usize, t_star: usize) -> (QuantileGrid, CovKernel) {
    let grid = stat::make_quantile_grid(sample, d).expect("grid");
    let kernel = stat::estimate_gamma(sample, &grid, t_star).expect("kernel");
    (grid, kernel)
}

/// Plan over the first `m` values of `sample` with an unreachable threshold,
/// so a benchmark can step it to the horizon.
pub fn open_plan(sample: &[f64], m: usize, d: usize) -> MonitorPlan {
    let (grid, kernel) = grid_and_kernel(sample, d, 10);
    let a = AChoice::InverseGamma.build(&kernel).expect("weight matrix");
    MonitorPlan::new(&sample[..m], 2.0, 0.25, 1e-4, 0.05, &grid, &kernel, &a, f64::INFINITY).expect("plan")
}
