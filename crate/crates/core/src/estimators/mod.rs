//! Simulation-based gradient estimators.
//!
//! Every estimator consumes a seed and reproduces its trajectory exactly from
//! it. Averages are kept in the incremental form `d += (x - d) / (t + 1)`.

mod hessian;
mod mcg;
mod param_reward;
mod pomdp_runs;
mod regenerative;
mod trace;
mod truncated;

use nalgebra::DVector;

pub use hessian::hessian_run;
pub use mcg::{mcg_run, simulate_chain};
pub use param_reward::{param_reward_run, ParamReward, StateReward, VapsReward};
pub use pomdp_runs::{
    control_reward_run, control_reward_target, gpomdp_replay, gpomdp_run, multi_agent_run, simulate_multi_agent,
    MultiAgentStep,
};
pub use regenerative::{expected_cycle_reward, reinforce_regenerative_run, CycleReward, RegenerativeSpec};
pub use trace::{DiscountedTrace, MatrixTrace, RunningMean, TruncatedTrace};
pub use truncated::truncated_trace_run;

use crate::chain::ParamChain;
use crate::error::{Error, Result};
use crate::rng::{RunRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mcg,
    Gpomdp,
    Regenerative,
    RegenerativeTailSum,
    Truncated,
    ControlReward,
    ParamReward,
    Hessian,
    MultiAgent,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Mcg => "mcg",
            Algorithm::Gpomdp => "gpomdp",
            Algorithm::Regenerative => "regenerative",
            Algorithm::RegenerativeTailSum => "regenerative-tail",
            Algorithm::Truncated => "truncated",
            Algorithm::ControlReward => "control-reward",
            Algorithm::ParamReward => "param-reward",
            Algorithm::Hessian => "hessian",
            Algorithm::MultiAgent => "multi-agent",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// How the eligibility trace forgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceParam {
    Discount(f64),
    Window(usize),
    /// Regenerative estimators reset at each cycle.
    Cycle,
}

/// The output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<V = DVector<f64>> {
    pub delta: V,
    /// Transitions averaged over (cycles, for the regenerative estimator).
    pub steps: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub trace: TraceParam,
}

/// Length, seed and start of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub steps: usize,
    pub seed: u64,
    /// Drawn uniformly from the initial stream when `None`.
    pub initial_state: Option<usize>,
    /// Transitions simulated and discarded before the traces start.
    pub burn_in: usize,
}

impl RunSpec {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self { steps, seed, initial_state: None, burn_in: 0 }
    }

    pub fn with_initial_state(mut self, state: usize) -> Self {
        self.initial_state = Some(state);
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    fn check(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("a run needs at least one step".into()));
        }
        Ok(())
    }
}

/// Simulates a chain by inverse-CDF sampling from the decision stream.
pub(crate) struct ChainSampler<'a> {
    chain: &'a ParamChain,
    rng: RunRng,
    state: usize,
}

impl<'a> ChainSampler<'a> {
    pub(crate) fn new(chain: &'a ParamChain, seed: u64, initial_state: Option<usize>) -> Result<Self> {
        let mut rng = RunRng::new(seed);
        let state = crate::pomdp::initial_state_for(chain.n(), initial_state, &mut rng)?;
        Ok(Self { chain, rng, state })
    }

    pub(crate) fn starting_at(chain: &'a ParamChain, seed: u64, state: usize) -> Self {
        Self { chain, rng: RunRng::new(seed), state }
    }

    pub(crate) fn state(&self) -> usize {
        self.state
    }

    /// Moves to the next state and returns it.
    pub(crate) fn advance(&mut self) -> usize {
        let next = self.rng.categorical(Stream::Decision, self.chain.transition().row(self.state));
        self.state = next;
        next
    }
}

/// `d p_ij / p_ij` for every transition, checked once up front.
pub(crate) struct RatioTable {
    n: usize,
    k: usize,
    ratios: Vec<f64>,
    /// Transitions with a derivative but no probability.
    forbidden: Vec<bool>,
}

impl RatioTable {
    pub(crate) fn new(chain: &ParamChain) -> Self {
        let (n, k) = (chain.n(), chain.k());
        let mut ratios = vec![0.0; n * n * k];
        let mut forbidden = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                if chain.likelihood_ratio(i, j, &mut ratios[idx * k..(idx + 1) * k]).is_err() {
                    forbidden[idx] = true;
                }
            }
        }
        Self { n, k, ratios, forbidden }
    }

    pub(crate) fn get(&self, chain: &ParamChain, i: usize, j: usize) -> Result<&[f64]> {
        let idx = i * self.n + j;
        if self.forbidden[idx] {
            return Err(Error::ZeroProbabilityTransition { from: i, to: j, prob: chain.transition().get(i, j) });
        }
        Ok(&self.ratios[idx * self.k..(idx + 1) * self.k])
    }
}

/// Debug-build check of `|z|_inf <= B / (1 - beta)`.
#[inline]
pub(crate) fn debug_check_trace_bound(z: &[f64], ratio_bound: f64, beta: f64) {
    if cfg!(debug_assertions) {
        let limit = ratio_bound / (1.0 - beta);
        let tol = 1e-9 * limit.max(1.0);
        let max = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        debug_assert!(max <= limit + tol, "trace {max} exceeds {limit}");
    }
}
