//! Error type shared across the crate.

use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by tensor ops, builders, and the training loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Dimension or shape mismatch between operands.
    Shape(String),
    /// Invalid specification or configuration value.
    Config(String),
    /// Numeric failure (non-finite loss, degenerate statistics).
    Numeric(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl core::error::Error for Error {}
