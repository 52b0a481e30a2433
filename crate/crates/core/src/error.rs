use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of the operation (zero velocity, zero direction, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    /// A construction produced an object violating its own invariants.
    #[error("internal construction error: {0}")]
    Construction(String),

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
