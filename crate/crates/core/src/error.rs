use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant (shape, range, finiteness).
    #[error("validation: {0}")]
    Validation(String),

    /// A fold or treatment-group slice is too small to fit the requested model.
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// The optimizer met a non-finite loss or gradient.
    #[error("solver failure in {context}: {message}")]
    Solver { context: String, message: String },

    /// CSV / config parsing problems, with position diagnostics where known.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn solver(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Solver { context: context.into(), message: message.into() }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
