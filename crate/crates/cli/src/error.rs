use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Library(#[from] blbound::Error),

    /// A mathematical precondition of the requested computation does not
    /// hold for the given input.
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Hypothesis(_) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}
