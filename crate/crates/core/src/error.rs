use thiserror::Error;

/// Errors raised by the exact solvers, the estimators and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid stochastic matrix: {0}")]
    InvalidStochastic(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("stationary distribution is not unique (smallest singular value {sigma_min:.3e})")]
    NonUniqueStationary { sigma_min: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(&'static str),

    #[error("discount factor {0} is outside [0, 1)")]
    InvalidDiscount(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sampled transition {from} -> {to} has probability {prob:e}")]
    ZeroProbabilityTransition { from: usize, to: usize, prob: f64 },

    #[error("regenerative cycle exceeded {max_len} transitions without returning to state {state}")]
    CycleTimeout { state: usize, max_len: usize },

    #[error("trace window {window} must be smaller than the step count {steps}")]
    WindowTooLarge { window: usize, steps: usize },

    #[error("reward kind mismatch: {0}")]
    RewardKindMismatch(&'static str),

    #[error("reward gradient magnitude {value:e} exceeds the declared bound {bound:e}")]
    UnboundedRewardGradient { value: f64, bound: f64 },

    #[error("model does not supply second derivatives of its transition probabilities")]
    MissingSecondDerivatives,

    #[error("eigenvalues are not distinct (minimum gap {min_gap:.3e})")]
    NotDistinct { min_gap: f64 },

    #[error("gradient norm {norm:.3e} is too small for a directional comparison")]
    DegenerateGradient { norm: f64 },

    #[error("eigendecomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("feature weights are degenerate (weighted squared norm {0:e})")]
    DegenerateFeatures(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_discount(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::InvalidDiscount(beta))
    }
}
