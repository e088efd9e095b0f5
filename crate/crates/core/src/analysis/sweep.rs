use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::RunSpec;
use crate::gradcheck::angle_deg;
use crate::problem::Problem;

/// Bias and variance of the discounted estimator at one `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub beta: f64,
    /// Angle between the true gradient and its discounted approximation, in
    /// degrees; `None` when either vanishes.
    pub bias_angle_deg: Option<f64>,
    /// Per-coordinate sample variance of the estimates across seeds.
    pub variance: Vec<f64>,
    pub steps: usize,
    pub seeds_used: usize,
    pub degenerate: bool,
}

/// For each `beta`: the exact bias angle, and the variance over `seeds` of
/// `steps`-long runs. Seeds run in parallel on the current rayon pool; the
/// output does not depend on scheduling.
pub fn bias_variance_sweep(problem: &Problem, betas: &[f64], steps: usize, seeds: &[u64]) -> Result<Vec<SweepRecord>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("variance needs at least two seeds".into()));
    }
    let grad = problem.exact_gradient()?.values;
    betas
        .iter()
        .map(|&beta| {
            let approx = problem.exact_target(beta)?.values;
            let bias_angle_deg = angle_deg(grad.as_slice(), approx.as_slice());
            let estimates = seeds
                .par_iter()
                .map(|&seed| problem.estimate(beta, &RunSpec::new(steps, seed), None).map(|e| e.delta))
                .collect::<Result<Vec<_>>>()?;
            let k = problem.k();
            let m = estimates.len() as f64;
            let variance = (0..k)
                .map(|kk| {
                    let mean = estimates.iter().map(|e| e[kk]).sum::<f64>() / m;
                    estimates.iter().map(|e| (e[kk] - mean).powi(2)).sum::<f64>() / (m - 1.0)
                })
                .collect();
            Ok(SweepRecord {
                beta,
                bias_angle_deg,
                variance,
                steps,
                seeds_used: seeds.len(),
                degenerate: bias_angle_deg.is_none(),
            })
        })
        .collect()
}
