//! A model together with the parameter vector it is evaluated at.

use nalgebra::DVector;

use crate::chain::{
    exact_grad_eta, grad_beta_eta, stationary_distribution, GradientKind, GradientVector, ParamChain, StochasticMatrix,
};
use crate::error::{Error, Result};
use crate::estimators::{control_reward_run, control_reward_target, gpomdp_run, mcg_run, GradientEstimate, RunSpec};
use crate::pomdp::{grad_expected_reward_bar, induced_chain, PomdpModel, Rewards, SoftmaxPolicy};
use crate::softmax::SoftmaxChainFamily;

#[derive(Debug, Clone)]
pub enum Problem {
    /// A chain whose transition logits depend on `theta`.
    SoftmaxChain { family: SoftmaxChainFamily, theta: DVector<f64> },
    /// A fixed chain; `theta` only sets the (zero) gradient dimension.
    ExplicitChain { transition: StochasticMatrix, rewards: DVector<f64>, theta: DVector<f64> },
    /// A POMDP driven by a softmax table policy over (observation, control).
    Pomdp { model: PomdpModel, theta: DVector<f64> },
}

impl Problem {
    pub fn theta(&self) -> &DVector<f64> {
        match self {
            Problem::SoftmaxChain { theta, .. }
            | Problem::ExplicitChain { theta, .. }
            | Problem::Pomdp { theta, .. } => theta,
        }
    }

    pub fn k(&self) -> usize {
        self.theta().len()
    }

    pub fn n(&self) -> usize {
        match self {
            Problem::SoftmaxChain { family, .. } => family.n(),
            Problem::ExplicitChain { transition, .. } => transition.n(),
            Problem::Pomdp { model, .. } => model.n(),
        }
    }

    /// The same model at another parameter vector.
    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != self.k() {
            return Err(Error::DimensionMismatch(format!("theta has {} entries, expected {}", theta.len(), self.k())));
        }
        let mut out = self.clone();
        match &mut out {
            Problem::SoftmaxChain { theta: t, .. }
            | Problem::ExplicitChain { theta: t, .. }
            | Problem::Pomdp { theta: t, .. } => *t = theta,
        }
        Ok(out)
    }

    pub fn policy(&self) -> Result<Option<SoftmaxPolicy>> {
        match self {
            Problem::Pomdp { model, theta } => {
                Ok(Some(SoftmaxPolicy::new(model.n_observations(), model.n_controls(), theta.as_slice())?))
            }
            _ => Ok(None),
        }
    }

    /// The (induced) chain at `theta`. Softmax families carry second
    /// derivatives; explicit chains do not.
    pub fn chain(&self) -> Result<ParamChain> {
        match self {
            Problem::SoftmaxChain { family, theta } => family.at(theta),
            Problem::ExplicitChain { transition, rewards, theta } => {
                ParamChain::constant(transition.clone(), rewards.clone(), theta.len())
            }
            Problem::Pomdp { model, .. } => induced_chain(model, &self.policy()?.expect("pomdp policy")),
        }
    }

    pub fn average_reward(&self) -> Result<f64> {
        let chain = self.chain()?;
        let pi = stationary_distribution(chain.transition())?;
        Ok(pi.pi.dot(chain.rewards()))
    }

    /// The true gradient of the average reward.
    pub fn exact_gradient(&self) -> Result<GradientVector> {
        let chain = self.chain()?;
        let mut grad = exact_grad_eta(&chain)?;
        if let Problem::Pomdp { model, .. } = self {
            if matches!(model.rewards(), Rewards::Control(_)) {
                let pi = stationary_distribution(chain.transition())?.pi;
                grad.values += grad_expected_reward_bar(model, &self.policy()?.expect("pomdp policy"))? * pi;
            }
        }
        Ok(grad)
    }

    /// What the discounted estimator converges to.
    pub fn exact_target(&self, beta: f64) -> Result<GradientVector> {
        match self {
            Problem::Pomdp { model, .. } if matches!(model.rewards(), Rewards::Control(_)) => {
                control_reward_target(model, &self.policy()?.expect("pomdp policy"), beta)
            }
            _ => {
                let g = grad_beta_eta(&self.chain()?, beta)?;
                Ok(GradientVector { values: g.values, kind: GradientKind::EtaBeta })
            }
        }
    }

    /// One simulated estimate: MCG on a chain, GPOMDP on a POMDP.
    pub fn estimate(&self, beta: f64, run: &RunSpec, baseline: Option<f64>) -> Result<GradientEstimate> {
        match self {
            Problem::Pomdp { model, .. } => {
                let policy = self.policy()?.expect("pomdp policy");
                match model.rewards() {
                    Rewards::State(_) => gpomdp_run(model, &policy, beta, run, baseline),
                    Rewards::Control(_) if baseline.is_some() => {
                        Err(Error::InvalidArgument("baselines are not supported with control-dependent rewards".into()))
                    }
                    Rewards::Control(_) => control_reward_run(model, &policy, beta, run),
                }
            }
            _ if baseline.is_some() => Err(Error::InvalidArgument("baselines apply to POMDP runs".into())),
            _ => mcg_run(&self.chain()?, beta, run),
        }
    }
}
