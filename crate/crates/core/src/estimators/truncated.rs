use nalgebra::DVector;

use super::{Algorithm, ChainSampler, GradientEstimate, RatioTable, RunSpec, RunningMean, TraceParam, TruncatedTrace};
use crate::chain::ParamChain;
use crate::error::{Error, Result};

/// MCG with a sliding window: `z_t` is the sum of the last `window` ratios,
/// and the average runs over `t = window, ..., T`.
pub fn truncated_trace_run(chain: &ParamChain, window: usize, run: &RunSpec) -> Result<GradientEstimate> {
    run.check()?;
    if window == 0 {
        return Err(Error::InvalidArgument("window must be positive".into()));
    }
    if window >= run.steps {
        return Err(Error::WindowTooLarge { window, steps: run.steps });
    }
    let table = RatioTable::new(chain);
    let mut sampler = ChainSampler::new(chain, run.seed, run.initial_state)?;
    for _ in 0..run.burn_in {
        sampler.advance();
    }
    let mut trace = TruncatedTrace::new(chain.k(), window);
    let mut mean = RunningMean::new(chain.k());
    let limit = window as f64 * chain.ratio_bound();
    for t in 1..=run.steps {
        let from = sampler.state();
        let to = sampler.advance();
        trace.push(table.get(chain, from, to)?);
        debug_assert!(trace.z().iter().all(|z| z.abs() <= limit * (1.0 + 1e-9) + 1e-9));
        if t >= window {
            mean.push_scaled(chain.rewards()[to], trace.z());
        }
    }
    Ok(GradientEstimate {
        delta: DVector::from_vec(mean.into_mean()),
        steps: run.steps,
        seed: run.seed,
        algorithm: Algorithm::Truncated,
        trace: TraceParam::Window(window),
    })
}
