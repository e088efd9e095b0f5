//! Likelihood-ratio gradient estimation for parameterized Markov chains and
//! POMDPs, with exact reference solvers.
//!
//! The exact side (`chain`, `pomdp`) computes stationary distributions,
//! discounted values and the true and discounted gradients by linear algebra.
//! The simulation side (`estimators`) produces unbiased or asymptotically
//! biased estimates of the same quantities from single sample paths, and
//! `analysis` compares the two.

pub mod analysis;
pub mod chain;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod pomdp;
pub mod problem;
pub mod rng;
pub mod softmax;

pub use chain::{
    average_reward, discounted_value, exact_grad_eta, grad_beta_eta, grad_j_beta, grad_pi, stationary_distribution,
    DiscountedValueVector, GradientKind, GradientVector, ParamChain, StationaryDistribution, StochasticMatrix,
};
pub use error::{Error, Result};
pub use estimators::{Algorithm, GradientEstimate, RunSpec, TraceParam};
pub use pomdp::{MultiAgentModel, PomdpModel, PomdpStep, Rewards, SoftmaxPolicy};
pub use problem::Problem;
pub use rng::{RunRng, Stream};
pub use softmax::{make_softmax_table_chain, SoftmaxChainFamily};
