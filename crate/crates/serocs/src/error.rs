//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition (wrong dimension,
    /// non-finite value, empty input, parameter out of range).
    #[error("input domain: {0}")]
    InputDomain(String),

    /// Geometrically or numerically degenerate input (rank-deficient
    /// matrix, coincident witness points) that has no meaningful result.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical: {0}")]
    Numerical(String),

    /// An operation was invoked on an object in the wrong state
    /// (e.g. classifying with an untrained classifier).
    #[error("state: {0}")]
    State(String),

    /// Long-term planning failed (infeasible subproblem at the first
    /// iterate or solver breakdown).
    #[error("planning: {0}")]
    Planning(String),

    /// A file could not be parsed; carries a position for diagnostics.
    #[error("{path}:{line}:{col}: {msg}")]
    Format {
        path: String,
        line: u64,
        col: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
