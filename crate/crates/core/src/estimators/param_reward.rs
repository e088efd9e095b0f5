use nalgebra::{DMatrix, DVector};

use super::{Algorithm, ChainSampler, DiscountedTrace, GradientEstimate, RatioTable, RunSpec, RunningMean, TraceParam};
use crate::chain::ParamChain;
use crate::error::{Error, Result};

/// A reward `r(theta, X_t, X_{t+1})` earned on a transition, with its
/// parameter gradient.
pub trait ParamReward {
    fn dim(&self) -> usize;
    fn value(&self, prev: usize, cur: usize) -> f64;
    fn grad(&self, prev: usize, cur: usize, out: &mut [f64]);
    /// Declared bound on `|d r / d theta_k|`.
    fn grad_bound(&self) -> f64;
}

/// `r(theta, X_{t+1})`, given by its values and gradients on the states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateReward {
    values: DVector<f64>,
    /// `n x K`
    grads: DMatrix<f64>,
    bound: f64,
}

impl StateReward {
    pub fn new(values: DVector<f64>, grads: DMatrix<f64>) -> Result<Self> {
        if grads.nrows() != values.len() {
            return Err(Error::DimensionMismatch("one gradient row per state".into()));
        }
        let bound = grads.amax();
        Ok(Self { values, grads, bound })
    }

    /// A parameter-independent reward.
    pub fn constant(values: DVector<f64>, k: usize) -> Self {
        let n = values.len();
        Self { values, grads: DMatrix::zeros(n, k), bound: 0.0 }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }
}

impl ParamReward for StateReward {
    fn dim(&self) -> usize {
        self.grads.ncols()
    }

    fn value(&self, _prev: usize, cur: usize) -> f64 {
        self.values[cur]
    }

    fn grad(&self, _prev: usize, cur: usize, out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(self.grads.row(cur).iter()) {
            *o = *g;
        }
    }

    fn grad_bound(&self) -> f64 {
        self.bound
    }
}

/// Negative squared Bellman error of a linear value estimate
/// `J(i) = w . phi(i)`:
/// `r = -1/2 [r(X_t) + alpha J(X_{t+1}) - J(X_t)]^2`.
///
/// The weights occupy `theta[offset .. offset + d]` of a `K`-dimensional
/// parameter vector; the remaining parameters do not enter the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct VapsReward {
    rewards: DVector<f64>,
    alpha: f64,
    /// `n x d`
    features: DMatrix<f64>,
    weights: DVector<f64>,
    offset: usize,
    k: usize,
    bound: f64,
}

impl VapsReward {
    pub fn new(
        rewards: DVector<f64>,
        alpha: f64,
        features: DMatrix<f64>,
        weights: DVector<f64>,
        offset: usize,
        k: usize,
    ) -> Result<Self> {
        crate::error::check_discount(alpha)?;
        let (n, d) = features.shape();
        if rewards.len() != n || weights.len() != d {
            return Err(Error::DimensionMismatch("rewards, features and weights disagree".into()));
        }
        if offset + d > k {
            return Err(Error::DimensionMismatch(format!("weights at {offset}..{} exceed K = {k}", offset + d)));
        }
        let mut this = Self { rewards, alpha, features, weights, offset, k, bound: 0.0 };
        let mut g = vec![0.0; k];
        for i in 0..n {
            for j in 0..n {
                this.grad(i, j, &mut g);
                this.bound = g.iter().fold(this.bound, |m, v| m.max(v.abs()));
            }
        }
        Ok(this)
    }

    fn td_error(&self, prev: usize, cur: usize) -> f64 {
        let j_prev = self.features.row(prev).dot(&self.weights.transpose());
        let j_cur = self.features.row(cur).dot(&self.weights.transpose());
        self.rewards[prev] + self.alpha * j_cur - j_prev
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

impl ParamReward for VapsReward {
    fn dim(&self) -> usize {
        self.k
    }

    fn value(&self, prev: usize, cur: usize) -> f64 {
        let d = self.td_error(prev, cur);
        -0.5 * d * d
    }

    fn grad(&self, prev: usize, cur: usize, out: &mut [f64]) {
        out.fill(0.0);
        let d = self.td_error(prev, cur);
        for f in 0..self.weights.len() {
            out[self.offset + f] = -d * (self.alpha * self.features[(cur, f)] - self.features[(prev, f)]);
        }
    }

    fn grad_bound(&self) -> f64 {
        self.bound
    }
}

/// MCG with a parameter-dependent reward: each step adds
/// `r(theta, X_t, X_{t+1}) z_{t+1} + d r(theta, X_t, X_{t+1})`.
pub fn param_reward_run(
    chain: &ParamChain,
    reward: &dyn ParamReward,
    beta: f64,
    run: &RunSpec,
) -> Result<GradientEstimate> {
    run.check()?;
    let k = chain.k();
    if reward.dim() != k {
        return Err(Error::DimensionMismatch(format!("reward has {} parameters, chain has {k}", reward.dim())));
    }
    let mut trace = DiscountedTrace::new(k, beta)?;
    let table = RatioTable::new(chain);
    let mut sampler = ChainSampler::new(chain, run.seed, run.initial_state)?;
    for _ in 0..run.burn_in {
        sampler.advance();
    }
    let bound = reward.grad_bound();
    let mut mean = RunningMean::new(k);
    let mut g = vec![0.0; k];
    let mut contrib = vec![0.0; k];
    for _ in 0..run.steps {
        let from = sampler.state();
        let to = sampler.advance();
        trace.push(table.get(chain, from, to)?);
        let r = reward.value(from, to);
        reward.grad(from, to, &mut g);
        if let Some(&worst) = g.iter().find(|v| !(v.abs() <= bound)) {
            return Err(Error::UnboundedRewardGradient { value: worst.abs(), bound });
        }
        for ((c, z), dg) in contrib.iter_mut().zip(trace.z()).zip(&g) {
            *c = r * z + dg;
        }
        mean.push(&contrib);
    }
    Ok(GradientEstimate {
        delta: DVector::from_vec(mean.into_mean()),
        steps: run.steps,
        seed: run.seed,
        algorithm: Algorithm::ParamReward,
        trace: TraceParam::Discount(beta),
    })
}
