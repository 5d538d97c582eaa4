use thiserror::Error;

/// Errors from constructing domain types or violating operation preconditions.
#[derive(Debug, Error)]
pub enum RankselError {
    #[error("invalid mixing distribution: {0}")]
    InvalidMixing(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
}

pub type Result<T> = std::result::Result<T, RankselError>;
