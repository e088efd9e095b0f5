//! Finite POMDPs controlled by softmax policies.
//!
//! A state `i` emits an observation `y ~ nu(i)`, the policy picks a control
//! `u ~ mu(theta, y)`, and the successor is drawn from row `i` of `P(u)`. The
//! transition matrices and the observation process do not depend on `theta`.

use nalgebra::{DMatrix, DVector};

use crate::chain::{check_rows_stochastic, ParamChain, StochasticMatrix, ROW_SUM_TOL};
use crate::error::{Error, Result};
use crate::rng::{RunRng, Stream};
use crate::softmax::row_derivatives;

/// State rewards `r(i)` or control-dependent rewards `r(u, i)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Rewards {
    State(DVector<f64>),
    /// `n x N`, entry `(i, u)` is `r(u, i)`.
    Control(DMatrix<f64>),
}

impl Rewards {
    pub fn bound(&self) -> f64 {
        match self {
            Rewards::State(r) => r.amax(),
            Rewards::Control(r) => r.amax(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    trans: Vec<StochasticMatrix>,
    obs: DMatrix<f64>,
    rewards: Rewards,
}

impl PomdpModel {
    pub fn new(trans: Vec<DMatrix<f64>>, obs: DMatrix<f64>, rewards: Rewards) -> Result<Self> {
        Self::with_tolerance(trans, obs, rewards, ROW_SUM_TOL)
    }

    pub fn with_tolerance(trans: Vec<DMatrix<f64>>, obs: DMatrix<f64>, rewards: Rewards, tol: f64) -> Result<Self> {
        if trans.is_empty() {
            return Err(Error::DimensionMismatch("a POMDP needs at least one control".into()));
        }
        let trans = trans.into_iter().map(|m| StochasticMatrix::with_tolerance(m, tol)).collect::<Result<Vec<_>>>()?;
        let n = trans[0].n();
        if trans.iter().any(|p| p.n() != n) {
            return Err(Error::DimensionMismatch("transition matrices differ in size".into()));
        }
        if obs.nrows() != n || obs.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("observation matrix must be {n} x M")));
        }
        check_rows_stochastic(&obs, tol)?;
        let n_controls = trans.len();
        match &rewards {
            Rewards::State(r) if r.len() != n => {
                return Err(Error::DimensionMismatch(format!("{} state rewards for {n} states", r.len())))
            }
            Rewards::Control(r) if r.nrows() != n || r.ncols() != n_controls => {
                return Err(Error::DimensionMismatch(format!("control rewards must be {n} x {n_controls}")))
            }
            _ => {}
        }
        if rewards.bound().is_nan() || !rewards.bound().is_finite() {
            return Err(Error::InvalidChain("non-finite reward".into()));
        }
        Ok(Self { trans, obs, rewards })
    }

    /// Controls are states and observations reveal the state: `P(u)` moves
    /// to `u` with certainty and `nu(i)` is a point mass on `i`, so the
    /// induced chain is `p_ij = mu_j(theta, i)`.
    pub fn deterministic_control(rewards: &[f64]) -> Result<Self> {
        let n = rewards.len();
        let trans = (0..n).map(|u| DMatrix::from_fn(n, n, |_, j| if j == u { 1.0 } else { 0.0 })).collect();
        Self::new(trans, DMatrix::identity(n, n), Rewards::State(DVector::from_column_slice(rewards)))
    }

    pub fn n(&self) -> usize {
        self.trans[0].n()
    }

    pub fn n_observations(&self) -> usize {
        self.obs.ncols()
    }

    pub fn n_controls(&self) -> usize {
        self.trans.len()
    }

    pub fn transition(&self, u: usize) -> &StochasticMatrix {
        &self.trans[u]
    }

    pub fn transitions(&self) -> &[StochasticMatrix] {
        &self.trans
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.obs
    }

    pub fn rewards(&self) -> &Rewards {
        &self.rewards
    }

    pub(crate) fn check_policy(&self, policy: &SoftmaxPolicy) -> Result<()> {
        if policy.n_observations() != self.n_observations() || policy.n_controls() != self.n_controls() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, model has {} observations and {} controls",
                policy.n_observations(),
                policy.n_controls(),
                self.n_observations(),
                self.n_controls()
            )));
        }
        Ok(())
    }
}

/// Softmax over controls with one parameter per (observation, control) pair.
/// `theta` is the `M x N` table flattened row-major, so `K = M * N`.
#[derive(Debug, Clone)]
pub struct SoftmaxPolicy {
    m: usize,
    n_controls: usize,
    theta: DVector<f64>,
    /// `probs[y][u]`
    probs: Vec<Vec<f64>>,
    /// `grad[y][u]`, a K-vector
    grad: Vec<Vec<Vec<f64>>>,
    /// `ratio[y][u] = grad[y][u] / probs[y][u]`
    ratio: Vec<Vec<Vec<f64>>>,
    /// `hess[y][u]`, K*K row-major
    hess: Vec<Vec<Vec<f64>>>,
}

impl SoftmaxPolicy {
    pub fn new(m: usize, n_controls: usize, theta: &[f64]) -> Result<Self> {
        let k_dim = m * n_controls;
        if theta.len() != k_dim {
            return Err(Error::DimensionMismatch(format!(
                "policy table needs {k_dim} parameters, got {}",
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        let mut probs = Vec::with_capacity(m);
        let mut grad = Vec::with_capacity(m);
        let mut ratio = Vec::with_capacity(m);
        let mut hess = Vec::with_capacity(m);
        for y in 0..m {
            let logits = &theta[y * n_controls..(y + 1) * n_controls];
            let map: Vec<Vec<f64>> = (0..n_controls)
                .map(|u| (0..k_dim).map(|k| if k == y * n_controls + u { 1.0 } else { 0.0 }).collect())
                .collect();
            let d = row_derivatives(logits, &map, true);
            let r = (0..n_controls).map(|u| d.grad[u].iter().map(|g| g / d.probs[u]).collect()).collect();
            probs.push(d.probs);
            grad.push(d.grad);
            ratio.push(r);
            hess.push(d.hess.expect("hessian requested"));
        }
        Ok(Self { m, n_controls, theta: DVector::from_column_slice(theta), probs, grad, ratio, hess })
    }

    pub fn zeros(m: usize, n_controls: usize) -> Self {
        Self::new(m, n_controls, &vec![0.0; m * n_controls]).expect("consistent dimensions")
    }

    pub fn n_observations(&self) -> usize {
        self.m
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn prob(&self, y: usize) -> &[f64] {
        &self.probs[y]
    }

    pub fn grad(&self, y: usize, u: usize) -> &[f64] {
        &self.grad[y][u]
    }

    /// `d mu_u(theta, y) / mu_u(theta, y)`.
    pub fn ratio(&self, y: usize, u: usize) -> &[f64] {
        &self.ratio[y][u]
    }

    pub fn hess(&self, y: usize, u: usize) -> &[f64] {
        &self.hess[y][u]
    }

    /// Largest `|d mu / mu|` over the table; at most 1 for softmax.
    pub fn ratio_bound(&self) -> f64 {
        self.ratio.iter().flatten().flatten().fold(0.0, |acc: f64, r| acc.max(r.abs()))
    }
}

/// One simulated POMDP transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PomdpStep {
    pub state: usize,
    pub observation: usize,
    pub control: usize,
    pub next_state: usize,
    /// `r(next_state)` for state rewards, `r(control, state)` for
    /// control-dependent rewards.
    pub reward: f64,
}

/// The chain induced by running `policy` on `model`:
/// `p_ij = sum_{y,u} nu_y(i) mu_u(y) p_ij(u)`, with first and second
/// derivatives. For control-dependent rewards the chain carries `rbar`.
pub fn induced_chain(model: &PomdpModel, policy: &SoftmaxPolicy) -> Result<ParamChain> {
    model.check_policy(policy)?;
    let n = model.n();
    let k_dim = policy.k();
    let mut p = DMatrix::zeros(n, n);
    let mut grad = vec![DMatrix::zeros(n, n); k_dim];
    let mut hess = vec![DMatrix::zeros(n, n); k_dim * k_dim];
    for i in 0..n {
        for y in 0..model.n_observations() {
            let nu = model.obs[(i, y)];
            if nu == 0.0 {
                continue;
            }
            for u in 0..model.n_controls() {
                let mu = policy.probs[y][u];
                let pu = model.trans[u].as_matrix();
                for j in 0..n {
                    let puij = pu[(i, j)];
                    if puij == 0.0 {
                        continue;
                    }
                    p[(i, j)] += nu * mu * puij;
                    let w = nu * puij;
                    for (k, g) in policy.grad[y][u].iter().enumerate() {
                        grad[k][(i, j)] += w * g;
                    }
                    for (kl, h) in policy.hess[y][u].iter().enumerate() {
                        hess[kl][(i, j)] += w * h;
                    }
                }
            }
        }
    }
    let rewards = match model.rewards() {
        Rewards::State(r) => r.clone(),
        Rewards::Control(_) => expected_reward_bar(model, policy)?,
    };
    let chain = ParamChain::new(policy.theta.clone(), StochasticMatrix::new(p)?, grad, rewards)?;
    chain.with_hessian(hess)
}

/// Samples one transition from `state`: observation, then control, then
/// successor, one uniform each from the observation, decision and
/// transition streams.
pub fn sample_step(model: &PomdpModel, policy: &SoftmaxPolicy, state: usize, rng: &mut RunRng) -> PomdpStep {
    let n_obs = model.n_observations();
    let observation = rng.categorical(Stream::Observation, (0..n_obs).map(|y| model.obs[(state, y)]));
    let control = rng.categorical(Stream::Decision, policy.probs[observation].iter().copied());
    let next_state = rng.categorical(Stream::Transition, model.trans[control].row(state));
    let reward = match &model.rewards {
        Rewards::State(r) => r[next_state],
        Rewards::Control(r) => r[(state, control)],
    };
    PomdpStep { state, observation, control, next_state, reward }
}

/// Simulates `steps` transitions; the initial state is drawn uniformly from
/// the initial stream unless given.
pub fn simulate(
    model: &PomdpModel,
    policy: &SoftmaxPolicy,
    steps: usize,
    seed: u64,
    initial_state: Option<usize>,
) -> Result<Vec<PomdpStep>> {
    model.check_policy(policy)?;
    let mut rng = RunRng::new(seed);
    let mut state = initial_state_for(model.n(), initial_state, &mut rng)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let step = sample_step(model, policy, state, &mut rng);
        state = step.next_state;
        out.push(step);
    }
    Ok(out)
}

pub(crate) fn initial_state_for(n: usize, pinned: Option<usize>, rng: &mut RunRng) -> Result<usize> {
    match pinned {
        Some(s) if s >= n => Err(Error::InvalidArgument(format!("initial state {s} out of range for {n} states"))),
        Some(s) => Ok(s),
        None => Ok(rng.index(Stream::Initial, n)),
    }
}

/// `rbar(i) = sum_{y,u} nu_y(i) mu_u(y) r(u, i)`.
pub fn expected_reward_bar(model: &PomdpModel, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    let Rewards::Control(r) = model.rewards() else {
        return Err(Error::RewardKindMismatch("expected reward needs control-dependent rewards"));
    };
    model.check_policy(policy)?;
    Ok(DVector::from_fn(model.n(), |i, _| {
        let mut acc = 0.0;
        for y in 0..model.n_observations() {
            for u in 0..model.n_controls() {
                acc += model.obs[(i, y)] * policy.probs[y][u] * r[(i, u)];
            }
        }
        acc
    }))
}

/// `d rbar` as a `K x n` matrix.
pub fn grad_expected_reward_bar(model: &PomdpModel, policy: &SoftmaxPolicy) -> Result<DMatrix<f64>> {
    let Rewards::Control(r) = model.rewards() else {
        return Err(Error::RewardKindMismatch("expected reward needs control-dependent rewards"));
    };
    model.check_policy(policy)?;
    let mut out = DMatrix::zeros(policy.k(), model.n());
    for i in 0..model.n() {
        for y in 0..model.n_observations() {
            for u in 0..model.n_controls() {
                let w = model.obs[(i, y)] * r[(i, u)];
                for (k, g) in policy.grad[y][u].iter().enumerate() {
                    out[(k, i)] += w * g;
                }
            }
        }
    }
    Ok(out)
}

/// Several agents acting on one shared environment. Each agent draws its own
/// observation from its own `nu^a(i)` and its own control from its policy;
/// the successor is drawn from the matrix of the joint control, indexed in
/// mixed radix with agent 0 most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAgentModel {
    trans: Vec<StochasticMatrix>,
    agent_obs: Vec<DMatrix<f64>>,
    agent_controls: Vec<usize>,
    rewards: DVector<f64>,
}

impl MultiAgentModel {
    pub fn new(
        trans: Vec<DMatrix<f64>>,
        agent_obs: Vec<DMatrix<f64>>,
        agent_controls: Vec<usize>,
        rewards: DVector<f64>,
    ) -> Result<Self> {
        if agent_obs.is_empty() || agent_obs.len() != agent_controls.len() {
            return Err(Error::DimensionMismatch("one observation matrix and control count per agent".into()));
        }
        let joint: usize = agent_controls.iter().product();
        if joint != trans.len() || joint == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} joint transition matrices for {joint} joint controls",
                trans.len()
            )));
        }
        let trans = trans.into_iter().map(StochasticMatrix::new).collect::<Result<Vec<_>>>()?;
        let n = trans[0].n();
        if trans.iter().any(|p| p.n() != n) || rewards.len() != n {
            return Err(Error::DimensionMismatch("inconsistent state counts".into()));
        }
        for o in &agent_obs {
            if o.nrows() != n || o.ncols() == 0 {
                return Err(Error::DimensionMismatch(format!("agent observation matrices must be {n} x M")));
            }
            check_rows_stochastic(o, ROW_SUM_TOL)?;
        }
        Ok(Self { trans, agent_obs, agent_controls, rewards })
    }

    /// The one-agent view of a POMDP with state rewards.
    pub fn single(model: &PomdpModel) -> Result<Self> {
        let Rewards::State(r) = model.rewards() else {
            return Err(Error::RewardKindMismatch("multi-agent runs use shared state rewards"));
        };
        Self::new(
            model.trans.iter().map(|p| p.as_matrix().clone()).collect(),
            vec![model.obs.clone()],
            vec![model.n_controls()],
            r.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.trans[0].n()
    }

    pub fn n_agents(&self) -> usize {
        self.agent_obs.len()
    }

    pub fn agent_observations(&self, a: usize) -> &DMatrix<f64> {
        &self.agent_obs[a]
    }

    pub fn agent_controls(&self) -> &[usize] {
        &self.agent_controls
    }

    pub fn rewards(&self) -> &DVector<f64> {
        &self.rewards
    }

    pub fn joint_transition(&self, joint: usize) -> &StochasticMatrix {
        &self.trans[joint]
    }

    pub fn joint_index(&self, controls: &[usize]) -> usize {
        controls.iter().zip(&self.agent_controls).fold(0, |acc, (&u, &n)| acc * n + u)
    }

    pub(crate) fn check_policies(&self, policies: &[SoftmaxPolicy]) -> Result<()> {
        if policies.len() != self.n_agents() {
            return Err(Error::DimensionMismatch(format!(
                "{} policies for {} agents",
                policies.len(),
                self.n_agents()
            )));
        }
        for (a, pol) in policies.iter().enumerate() {
            if pol.n_observations() != self.agent_obs[a].ncols() || pol.n_controls() != self.agent_controls[a] {
                return Err(Error::DimensionMismatch(format!("policy of agent {a} has the wrong shape")));
            }
        }
        Ok(())
    }

    /// The collective chain, with parameters concatenated in agent order.
    pub fn induced_chain(&self, policies: &[SoftmaxPolicy]) -> Result<ParamChain> {
        self.check_policies(policies)?;
        let n = self.n();
        let offsets: Vec<usize> = policies
            .iter()
            .scan(0, |acc, p| {
                let o = *acc;
                *acc += p.k();
                Some(o)
            })
            .collect();
        let k_total: usize = policies.iter().map(SoftmaxPolicy::k).sum();
        let mut p = DMatrix::zeros(n, n);
        let mut grad = vec![DMatrix::zeros(n, n); k_total];
        let mut theta = Vec::with_capacity(k_total);
        for pol in policies {
            theta.extend(pol.theta().iter());
        }
        for i in 0..n {
            // Marginal control distribution of each agent in state i.
            let q: Vec<Vec<f64>> = (0..self.n_agents())
                .map(|a| {
                    (0..self.agent_controls[a])
                        .map(|u| (0..policies[a].m).map(|y| self.agent_obs[a][(i, y)] * policies[a].probs[y][u]).sum())
                        .collect()
                })
                .collect();
            let dq: Vec<Vec<Vec<f64>>> = (0..self.n_agents())
                .map(|a| {
                    (0..self.agent_controls[a])
                        .map(|u| {
                            let mut g = vec![0.0; policies[a].k()];
                            for y in 0..policies[a].m {
                                for (gk, d) in g.iter_mut().zip(&policies[a].grad[y][u]) {
                                    *gk += self.agent_obs[a][(i, y)] * d;
                                }
                            }
                            g
                        })
                        .collect()
                })
                .collect();
            let mut controls = vec![0; self.n_agents()];
            for joint in 0..self.trans.len() {
                let mut rem = joint;
                for a in (0..self.n_agents()).rev() {
                    controls[a] = rem % self.agent_controls[a];
                    rem /= self.agent_controls[a];
                }
                let prob: f64 = (0..self.n_agents()).map(|a| q[a][controls[a]]).product();
                let pj = self.trans[joint].as_matrix();
                for j in 0..n {
                    let pij = pj[(i, j)];
                    if pij == 0.0 {
                        continue;
                    }
                    p[(i, j)] += prob * pij;
                    for a in 0..self.n_agents() {
                        let others: f64 = (0..self.n_agents()).filter(|&b| b != a).map(|b| q[b][controls[b]]).product();
                        for (kk, d) in dq[a][controls[a]].iter().enumerate() {
                            grad[offsets[a] + kk][(i, j)] += d * others * pij;
                        }
                    }
                }
            }
        }
        ParamChain::new(DVector::from_vec(theta), StochasticMatrix::new(p)?, grad, self.rewards.clone())
    }
}
