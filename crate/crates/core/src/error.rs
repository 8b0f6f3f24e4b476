//! Error type shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Parameter tensors and architecture disagree, or a config is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or matrix sizes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A non-finite value showed up where finite math was required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An exponential-cost oracle was asked for an instance above its guard.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// Checkpoint bytes are malformed, truncated, or versioned differently.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// The training loop hit a non-finite cost or gradient.
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    /// A simulated message was lost and the abort policy is active.
    #[error("message from node {from} to node {to} lost in round {round}")]
    MessageLost { from: usize, to: usize, round: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
