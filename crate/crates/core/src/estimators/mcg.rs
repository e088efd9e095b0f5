use nalgebra::DVector;

use super::{
    debug_check_trace_bound, Algorithm, ChainSampler, DiscountedTrace, GradientEstimate, RatioTable, RunSpec,
    RunningMean, TraceParam,
};
use crate::chain::ParamChain;
use crate::error::Result;

/// Markov chain gradient: along one trajectory,
/// `z <- beta z + dp/p` and `delta += (r(X_{t+1}) z - delta) / (t + 1)`.
pub fn mcg_run(chain: &ParamChain, beta: f64, run: &RunSpec) -> Result<GradientEstimate> {
    run.check()?;
    let mut trace = DiscountedTrace::new(chain.k(), beta)?;
    let table = RatioTable::new(chain);
    let mut sampler = ChainSampler::new(chain, run.seed, run.initial_state)?;
    for _ in 0..run.burn_in {
        sampler.advance();
    }
    let mut mean = RunningMean::new(chain.k());
    let rewards = chain.rewards();
    for _ in 0..run.steps {
        let from = sampler.state();
        let to = sampler.advance();
        trace.push(table.get(chain, from, to)?);
        debug_check_trace_bound(trace.z(), chain.ratio_bound(), beta);
        mean.push_scaled(rewards[to], trace.z());
    }
    Ok(GradientEstimate {
        delta: DVector::from_vec(mean.into_mean()),
        steps: run.steps,
        seed: run.seed,
        algorithm: Algorithm::Mcg,
        trace: TraceParam::Discount(beta),
    })
}

/// The states `X_0, ..., X_T` visited by [`mcg_run`] for the same spec, after
/// burn-in.
pub fn simulate_chain(chain: &ParamChain, run: &RunSpec) -> Result<Vec<usize>> {
    let mut sampler = ChainSampler::new(chain, run.seed, run.initial_state)?;
    for _ in 0..run.burn_in {
        sampler.advance();
    }
    let mut states = Vec::with_capacity(run.steps + 1);
    states.push(sampler.state());
    for _ in 0..run.steps {
        states.push(sampler.advance());
    }
    Ok(states)
}
