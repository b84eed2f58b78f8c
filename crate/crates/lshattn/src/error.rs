//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input value violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two arguments have incompatible shapes or dimensions.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimMismatch(msg.into())
    }

    /// Short machine-parsable tag used by the CLI error output.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::DimMismatch(_) => "validation",
            Error::Io(_) => "io",
            Error::Csv(e) if e.is_io_error() => "io",
            Error::Csv(_) => "validation",
            Error::Json(_) => "validation",
        }
    }

    /// Process exit code for the CLI: 3 for validation failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self.tag() {
            "io" => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
