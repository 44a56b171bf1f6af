//! Empirical convergence rates: mean test MSE over a sequence of sample
//! sizes and the least-squares slope of `log(MSE)` against `log(n)`.

use serde::Serialize;

use super::experiment::{run_experiment, MethodSettings};
use crate::config::Method;
use crate::dgp::ScenarioSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_mse: f64,
    pub se_mean: f64,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSweep {
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
}

/// Minimax exponent `-2 gamma / (d + 2 gamma)` for smoothness `gamma` in
/// dimension `d`.
pub fn theoretical_exponent(gamma: f64, d: f64) -> f64 {
    -2.0 * gamma / (d + 2.0 * gamma)
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn log_log_slope(ns: &[usize], mses: &[f64]) -> Result<(f64, f64)> {
    if mses.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite("mean MSE"));
    }
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = mses.iter().map(|v| v.ln()).collect();
    Ok(ols(&lx, &ly))
}

/// Runs `reps` replications of `method` at every size in `n_list`, seeding
/// each size's replications from `master_seed`.
pub fn rate_sweep(
    base: &ScenarioSpec,
    method: Method,
    settings: &MethodSettings,
    n_list: &[usize],
    reps: usize,
    master_seed: u64,
    test_points: usize,
) -> Result<RateSweep> {
    if n_list.len() < 3 {
        return Err(Error::invalid("n_list", format!("need at least 3 sizes, got {}", n_list.len())));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_list", "must be strictly increasing"));
    }
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let spec = ScenarioSpec { n, ..base.clone() };
        let report = run_experiment(&spec, &[method], settings, reps, master_seed, test_points)?
            .pop()
            .expect("one method in, one report out");
        points.push(RatePoint {
            n,
            mean_mse: report.mean_mse,
            se_mean: report.se_mean,
            failed: report.failed,
        });
    }
    let mses: Vec<f64> = points.iter().map(|p| p.mean_mse).collect();
    let (slope, intercept) = log_log_slope(n_list, &mses)?;
    Ok(RateSweep { points, slope, intercept })
}
