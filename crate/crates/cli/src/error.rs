use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: parse error at {key}: {message}")]
    Parse { path: PathBuf, key: String, message: String },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] pg_lab_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },

    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    /// 0 success, 1 model or validation error, 2 usage error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use pg_lab_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } | CliError::Validation { .. } | CliError::Io { .. } | CliError::Output(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidDiscount(_) | E::WindowTooLarge { .. } | E::InvalidArgument(_) => 2,
                E::InvalidStochastic(_)
                | E::InvalidChain(_)
                | E::DimensionMismatch(_)
                | E::RewardKindMismatch(_)
                | E::UnboundedRewardGradient { .. }
                | E::MissingSecondDerivatives => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
