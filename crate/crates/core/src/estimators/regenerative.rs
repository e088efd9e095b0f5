use nalgebra::{DMatrix, DVector};

use super::{Algorithm, ChainSampler, GradientEstimate, RatioTable, RunningMean, TraceParam};
use crate::chain::ParamChain;
use crate::error::{Error, Result};

/// The performance collected over one cycle `X_0 = i*, ..., X_T = i*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleReward {
    /// `sum_{s=0}^T r(X_s)`
    CycleSum,
    /// `-(T + 1)`, so maximizing it shortens the return time.
    NegLength,
    /// `sum_{s=0}^T alpha^s r(X_s)`
    Discounted(f64),
}

impl CycleReward {
    fn check(self) -> Result<()> {
        match self {
            CycleReward::Discounted(a) if !(0.0..=1.0).contains(&a) => Err(Error::InvalidDiscount(a)),
            _ => Ok(()),
        }
    }

    fn per_state(self, chain: &ParamChain, state: usize) -> f64 {
        match self {
            CycleReward::NegLength => -1.0,
            _ => chain.rewards()[state],
        }
    }

    fn factor(self) -> f64 {
        match self {
            CycleReward::Discounted(a) => a,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenerativeSpec {
    pub recurrent_state: usize,
    pub cycles: usize,
    pub seed: u64,
    pub reward: CycleReward,
    /// Credit each ratio only with the rewards that follow it.
    pub tail_sum: bool,
    pub max_cycle_len: usize,
}

impl RegenerativeSpec {
    pub fn new(recurrent_state: usize, cycles: usize, seed: u64) -> Self {
        Self { recurrent_state, cycles, seed, reward: CycleReward::CycleSum, tail_sum: false, max_cycle_len: 1_000_000 }
    }

    pub fn with_reward(mut self, reward: CycleReward) -> Self {
        self.reward = reward;
        self
    }

    pub fn with_tail_sum(mut self, tail_sum: bool) -> Self {
        self.tail_sum = tail_sum;
        self
    }

    pub fn with_max_cycle_len(mut self, max_cycle_len: usize) -> Self {
        self.max_cycle_len = max_cycle_len;
        self
    }
}

/// REINFORCE over regeneration cycles of `i*`.
///
/// Each cycle contributes `F z_T`, where `F` is the cycle performance and
/// `z_T` sums the ratios of all `T` transitions including the return to `i*`.
/// With `tail_sum` it contributes `sum_t ratio_t sum_{s>t} f(X_s)` instead.
/// The result is the average over cycles, an unbiased estimate of the
/// gradient of the expected cycle performance.
pub fn reinforce_regenerative_run(chain: &ParamChain, spec: &RegenerativeSpec) -> Result<GradientEstimate> {
    let n = chain.n();
    let istar = spec.recurrent_state;
    if istar >= n {
        return Err(Error::InvalidArgument(format!("recurrent state {istar} out of range for {n} states")));
    }
    if spec.cycles == 0 {
        return Err(Error::InvalidArgument("need at least one cycle".into()));
    }
    spec.reward.check()?;
    let k = chain.k();
    let table = RatioTable::new(chain);
    let mut sampler = ChainSampler::starting_at(chain, spec.seed, istar);
    let factor = spec.reward.factor();
    let mut z = vec![0.0; k];
    let mut tail = vec![0.0; k];
    let mut contrib = vec![0.0; k];
    let mut mean = RunningMean::new(k);
    for _ in 0..spec.cycles {
        z.fill(0.0);
        tail.fill(0.0);
        let mut weight = 1.0;
        let mut perf = spec.reward.per_state(chain, istar);
        let mut len = 0;
        loop {
            let from = sampler.state();
            let to = sampler.advance();
            for (zk, r) in z.iter_mut().zip(table.get(chain, from, to)?) {
                *zk += r;
            }
            len += 1;
            weight *= factor;
            let f = weight * spec.reward.per_state(chain, to);
            perf += f;
            for (t, zk) in tail.iter_mut().zip(&z) {
                *t += f * zk;
            }
            if to == istar {
                break;
            }
            if len >= spec.max_cycle_len {
                return Err(Error::CycleTimeout { state: istar, max_len: spec.max_cycle_len });
            }
        }
        if spec.tail_sum {
            contrib.copy_from_slice(&tail);
        } else {
            for (c, zk) in contrib.iter_mut().zip(&z) {
                *c = perf * zk;
            }
        }
        mean.push(&contrib);
    }
    Ok(GradientEstimate {
        delta: DVector::from_vec(mean.into_mean()),
        steps: spec.cycles,
        seed: spec.seed,
        algorithm: if spec.tail_sum { Algorithm::RegenerativeTailSum } else { Algorithm::Regenerative },
        trace: TraceParam::Cycle,
    })
}

/// Expected cycle performance from `i*`, by a first-passage solve:
/// `h(j) = c(j) + a [sum_{k != i*} p_jk h(k) + p_{j i*} c(i*)]` on the other
/// states, then the same expression at `i*`.
pub fn expected_cycle_reward(chain: &ParamChain, recurrent_state: usize, reward: CycleReward) -> Result<f64> {
    reward.check()?;
    let n = chain.n();
    let istar = recurrent_state;
    if istar >= n {
        return Err(Error::InvalidArgument(format!("recurrent state {istar} out of range for {n} states")));
    }
    let p = chain.transition().as_matrix();
    let a = reward.factor();
    let c: Vec<f64> = (0..n).map(|j| reward.per_state(chain, j)).collect();
    let others: Vec<usize> = (0..n).filter(|&j| j != istar).collect();
    let m = others.len();
    let mut lhs = DMatrix::identity(m, m);
    let mut rhs = DVector::zeros(m);
    for (r, &j) in others.iter().enumerate() {
        for (col, &kk) in others.iter().enumerate() {
            lhs[(r, col)] -= a * p[(j, kk)];
        }
        rhs[r] = c[j] + a * p[(j, istar)] * c[istar];
    }
    let h = if m == 0 {
        DVector::zeros(0)
    } else {
        lhs.lu().solve(&rhs).ok_or(Error::SingularSystem("first-passage system"))?
    };
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("first-passage system"));
    }
    let mut v = c[istar] + a * p[(istar, istar)] * c[istar];
    for (col, &kk) in others.iter().enumerate() {
        v += a * p[(istar, kk)] * h[col];
    }
    Ok(v)
}
