//! Crate-wide error type. Variants map onto the CLI exit-code contract:
//! configuration problems exit 2, data problems 3, numeric failures 4.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or registry contents (bad field values, inconsistent specs).
    #[error("config error: {0}")]
    Config(String),

    /// Missing or malformed input data (files, headers, annotations, manifests).
    #[error("data error: {0}")]
    Data(String),

    /// A file encoding we deliberately do not handle.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// Numeric failure during training or detection (non-finite loss, degenerate fit).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Unsupported(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}
