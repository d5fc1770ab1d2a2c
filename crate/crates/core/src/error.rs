use thiserror::Error;

/// Errors raised by the library. Non-convergence and inconclusive searches are
/// reported through result types, not through this enum.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("map {index} is not surjective: rank {rank} < target dimension {target}")]
    NotSurjective {
        index: usize,
        rank: usize,
        target: usize,
    },

    #[error("map {index} has essential rank {rank} at its threshold, expected full rank {target}")]
    RankDeficient {
        index: usize,
        rank: usize,
        target: usize,
    },

    #[error("ambient dimension {dim} exceeds the exact-method limit {max}")]
    UnsupportedDimension { dim: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
