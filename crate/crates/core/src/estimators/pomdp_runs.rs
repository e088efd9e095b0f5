use nalgebra::DVector;

use super::{debug_check_trace_bound, Algorithm, DiscountedTrace, GradientEstimate, RunSpec, RunningMean, TraceParam};
use crate::chain::{discounted_value, stationary_distribution, GradientKind, GradientVector};
use crate::error::{Error, Result};
use crate::pomdp::{
    grad_expected_reward_bar, induced_chain, initial_state_for, sample_step, MultiAgentModel, PomdpModel, PomdpStep,
    Rewards, SoftmaxPolicy,
};
use crate::rng::{RunRng, Stream};

fn estimate(delta: Vec<f64>, run: &RunSpec, algorithm: Algorithm, beta: f64) -> GradientEstimate {
    GradientEstimate {
        delta: DVector::from_vec(delta),
        steps: run.steps,
        seed: run.seed,
        algorithm,
        trace: TraceParam::Discount(beta),
    }
}

/// GPOMDP: the trace accumulates `d mu / mu` of the sampled controls, and
/// each step adds `(r(X_{t+1}) - b) z`.
pub fn gpomdp_run(
    model: &PomdpModel,
    policy: &SoftmaxPolicy,
    beta: f64,
    run: &RunSpec,
    baseline: Option<f64>,
) -> Result<GradientEstimate> {
    run.check()?;
    if matches!(model.rewards(), Rewards::Control(_)) {
        return Err(Error::RewardKindMismatch("control-dependent rewards need control_reward_run"));
    }
    let mut trace = DiscountedTrace::new(policy.k(), beta)?;
    model.check_policy(policy)?;
    let mut rng = RunRng::new(run.seed);
    let mut state = initial_state_for(model.n(), run.initial_state, &mut rng)?;
    for _ in 0..run.burn_in {
        state = sample_step(model, policy, state, &mut rng).next_state;
    }
    let b = baseline.unwrap_or(0.0);
    let mut mean = RunningMean::new(policy.k());
    for _ in 0..run.steps {
        let step = sample_step(model, policy, state, &mut rng);
        trace.push(policy.ratio(step.observation, step.control));
        debug_check_trace_bound(trace.z(), policy.ratio_bound(), beta);
        mean.push_scaled(step.reward - b, trace.z());
        state = step.next_state;
    }
    Ok(estimate(mean.into_mean(), run, Algorithm::Gpomdp, beta))
}

/// Runs the GPOMDP recursion over an already recorded trajectory.
pub fn gpomdp_replay(
    policy: &SoftmaxPolicy,
    beta: f64,
    steps: &[PomdpStep],
    seed: u64,
    baseline: Option<f64>,
) -> Result<GradientEstimate> {
    let run = RunSpec::new(steps.len(), seed);
    run.check()?;
    let mut trace = DiscountedTrace::new(policy.k(), beta)?;
    let b = baseline.unwrap_or(0.0);
    let mut mean = RunningMean::new(policy.k());
    for step in steps {
        if step.observation >= policy.n_observations() || step.control >= policy.n_controls() {
            return Err(Error::DimensionMismatch("recorded step outside the policy table".into()));
        }
        trace.push(policy.ratio(step.observation, step.control));
        mean.push_scaled(step.reward - b, trace.z());
    }
    Ok(estimate(mean.into_mean(), &run, Algorithm::Gpomdp, beta))
}

/// GPOMDP for rewards `r(u, i)`: at each visited state the next observation
/// and control are drawn and the step adds
/// `r(U_{t+1}, X_{t+1}) (z_{t+1} + d mu(U_{t+1}) / mu(U_{t+1}))`.
pub fn control_reward_run(
    model: &PomdpModel,
    policy: &SoftmaxPolicy,
    beta: f64,
    run: &RunSpec,
) -> Result<GradientEstimate> {
    run.check()?;
    if !matches!(model.rewards(), Rewards::Control(_)) {
        return Err(Error::RewardKindMismatch("control_reward_run needs control-dependent rewards"));
    }
    let mut trace = DiscountedTrace::new(policy.k(), beta)?;
    model.check_policy(policy)?;
    let mut rng = RunRng::new(run.seed);
    let mut state = initial_state_for(model.n(), run.initial_state, &mut rng)?;
    for _ in 0..run.burn_in {
        state = sample_step(model, policy, state, &mut rng).next_state;
    }
    let k = policy.k();
    let mut mean = RunningMean::new(k);
    let mut contrib = vec![0.0; k];
    let mut step = sample_step(model, policy, state, &mut rng);
    for _ in 0..run.steps {
        trace.push(policy.ratio(step.observation, step.control));
        step = sample_step(model, policy, step.next_state, &mut rng);
        let ratio = policy.ratio(step.observation, step.control);
        for ((c, z), g) in contrib.iter_mut().zip(trace.z()).zip(ratio) {
            *c = step.reward * (z + g);
        }
        mean.push(&contrib);
    }
    Ok(estimate(mean.into_mean(), run, Algorithm::ControlReward, beta))
}

/// The limit of [`control_reward_run`]: `pi' [dP Jbar_beta + d rbar]`, with
/// `Jbar_beta` the discounted value of the expected rewards `rbar`.
pub fn control_reward_target(model: &PomdpModel, policy: &SoftmaxPolicy, beta: f64) -> Result<GradientVector> {
    let chain = induced_chain(model, policy)?;
    let d_rbar = grad_expected_reward_bar(model, policy)?;
    let j = discounted_value(&chain, beta)?;
    let pi = stationary_distribution(chain.transition())?.pi;
    let mut values = DVector::zeros(chain.k());
    for (k, g) in chain.grad_transition().iter().enumerate() {
        values[k] = pi.dot(&(g * &j.values)) + d_rbar.row(k).transpose().dot(&pi);
    }
    Ok(GradientVector { values, kind: GradientKind::EtaBeta })
}

/// One joint transition of a multi-agent system.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAgentStep {
    pub state: usize,
    pub observations: Vec<usize>,
    pub controls: Vec<usize>,
    pub next_state: usize,
    pub reward: f64,
}

impl MultiAgentStep {
    /// What agent `a` saw and did, in single-agent form.
    pub fn agent_view(&self, a: usize) -> PomdpStep {
        PomdpStep {
            state: self.state,
            observation: self.observations[a],
            control: self.controls[a],
            next_state: self.next_state,
            reward: self.reward,
        }
    }
}

/// Each agent in turn draws an observation then a control; the successor is
/// drawn last from the joint-control matrix.
fn sample_multi(
    model: &MultiAgentModel,
    policies: &[SoftmaxPolicy],
    state: usize,
    rng: &mut RunRng,
    observations: &mut [usize],
    controls: &mut [usize],
) -> usize {
    for (a, pol) in policies.iter().enumerate() {
        let nu = model.agent_observations(a);
        let y = rng.categorical(Stream::Observation, (0..nu.ncols()).map(|y| nu[(state, y)]));
        observations[a] = y;
        controls[a] = rng.categorical(Stream::Decision, pol.prob(y).iter().copied());
    }
    let joint = model.joint_index(controls);
    rng.categorical(Stream::Transition, model.joint_transition(joint).row(state))
}

fn start_multi(model: &MultiAgentModel, policies: &[SoftmaxPolicy], run: &RunSpec) -> Result<(RunRng, usize)> {
    run.check()?;
    model.check_policies(policies)?;
    let mut rng = RunRng::new(run.seed);
    let mut state = initial_state_for(model.n(), run.initial_state, &mut rng)?;
    let (mut obs, mut ctrl) = (vec![0; policies.len()], vec![0; policies.len()]);
    for _ in 0..run.burn_in {
        state = sample_multi(model, policies, state, &mut rng, &mut obs, &mut ctrl);
    }
    Ok((rng, state))
}

/// Records the trajectory that [`multi_agent_run`] follows for the same spec.
pub fn simulate_multi_agent(
    model: &MultiAgentModel,
    policies: &[SoftmaxPolicy],
    run: &RunSpec,
) -> Result<Vec<MultiAgentStep>> {
    let (mut rng, mut state) = start_multi(model, policies, run)?;
    let mut out = Vec::with_capacity(run.steps);
    for _ in 0..run.steps {
        let (mut observations, mut controls) = (vec![0; policies.len()], vec![0; policies.len()]);
        let next = sample_multi(model, policies, state, &mut rng, &mut observations, &mut controls);
        out.push(MultiAgentStep { state, observations, controls, next_state: next, reward: model.rewards()[next] });
        state = next;
    }
    Ok(out)
}

/// Independent agents sharing one reward signal. Agent `a` keeps its own
/// trace over its own parameters using only its own observations and
/// controls; the estimate is the concatenation in agent order.
pub fn multi_agent_run(
    model: &MultiAgentModel,
    policies: &[SoftmaxPolicy],
    beta: f64,
    run: &RunSpec,
) -> Result<GradientEstimate> {
    let (mut rng, mut state) = start_multi(model, policies, run)?;
    let mut traces = policies.iter().map(|p| DiscountedTrace::new(p.k(), beta)).collect::<Result<Vec<_>>>()?;
    let mut means: Vec<RunningMean> = policies.iter().map(|p| RunningMean::new(p.k())).collect();
    let (mut obs, mut ctrl) = (vec![0; policies.len()], vec![0; policies.len()]);
    for _ in 0..run.steps {
        let next = sample_multi(model, policies, state, &mut rng, &mut obs, &mut ctrl);
        let r = model.rewards()[next];
        for (a, pol) in policies.iter().enumerate() {
            traces[a].push(pol.ratio(obs[a], ctrl[a]));
            debug_check_trace_bound(traces[a].z(), pol.ratio_bound(), beta);
            means[a].push_scaled(r, traces[a].z());
        }
        state = next;
    }
    let delta: Vec<f64> = means.into_iter().flat_map(RunningMean::into_mean).collect();
    Ok(estimate(delta, run, Algorithm::MultiAgent, beta))
}
