use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or vector dimensions.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation produced NaN or infinity.
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    /// A precondition of an operation was violated.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// Bad configuration key, value, or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint could not be read, written, or validated.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
