use thiserror::Error;

use crate::optimize::OptimizationTrace;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A state would exceed the configured amplitude cap.
    #[error("state dimension {requested} exceeds the cap of {cap} amplitudes")]
    Capacity { requested: u128, cap: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimizer error: {0}")]
    Optimizer(String),

    /// An optimization left the oracle's validity region. The trace holds
    /// every iterate accepted before the failure.
    #[error("optimization diverged: {message}")]
    Diverged {
        message: String,
        trace: Box<OptimizationTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
