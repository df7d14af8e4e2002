//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A resource (e.g. the replay buffer) cannot serve the request yet.
    #[error("not ready: {0}")]
    NotReady(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    /// On-policy data was collected under a different parameter version.
    #[error("stale rollouts: collected at parameter version {collected}, current is {current}")]
    StaleRollouts { collected: u64, current: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
