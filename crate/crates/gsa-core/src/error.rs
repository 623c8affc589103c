use thiserror::Error;

/// Crate-wide error type. Construction helpers keep call sites short.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension disagreement between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration value (zero dims, non-divisible chunk sizes, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Input outside an operation's domain (log of non-positive, positive log-gate, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A NaN or infinity reached a boundary where finiteness is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed or incompatible checkpoint file.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Verification failure surfaced by a check command (gradcheck, equivcheck).
    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }
    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
    pub fn verification(msg: impl Into<String>) -> Self {
        Error::Verification(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
