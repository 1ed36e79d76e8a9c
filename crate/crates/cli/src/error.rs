use std::fmt::Display;

use thiserror::Error;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Command failure, split by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Input {
        context: String,
        #[source]
        source: BoxError,
    },
    #[error("{context}: {source}")]
    Compute {
        context: String,
        #[source]
        source: BoxError,
    },
}

impl CliError {
    /// 1 for computational failures, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Compute { .. } => 1,
            Self::Usage(_) | Self::Input { .. } => 2,
        }
    }
}

/// Wraps an error as an input/IO failure with `context`.
pub fn input<E: Into<BoxError>>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input {
        context: context.to_string(),
        source: e.into(),
    }
}

/// Wraps an error as a computational failure with `context`.
pub fn compute<E: Into<BoxError>>(context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Compute {
        context: context.to_string(),
        source: e.into(),
    }
}
