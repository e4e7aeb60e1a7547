use thiserror::Error;

use robust_phase::error::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid run spec: {0}")]
    Invalid(String),

    #[error("cannot parse run spec: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 1 for anything the user can fix by changing the input, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(
                CoreError::Invalid(_) | CoreError::ConfigInvariantViolated(_) | CoreError::InsufficientSamples { .. },
            ) => 1,
            CliError::Core(_) => 2,
            _ => 1,
        }
    }
}
