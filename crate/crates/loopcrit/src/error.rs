use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("graph too large: {0}")]
    SizeOverflow(String),
    #[error("link time collides with an existing endpoint at the same vertex")]
    TimeCollision,
    #[error("invalid link reference: edge {edge}, index {index}")]
    InvalidLink { edge: usize, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("oracle truncation not reached: {0}")]
    OracleTruncation(String),
    #[error("eigensolver failed to converge after {0} sweeps")]
    JacobiNonConvergence(usize),
    #[error("non-finite estimand value at step {0}")]
    NonFiniteEstimand(u64),
    #[error("bisection bracket failure: {0}")]
    BracketFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LoopError>;
