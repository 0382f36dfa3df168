//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in a formula or strata string, with the byte offset of
    /// the offending token.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Invalid model specification (family/link mismatch, bad prior, bad
    /// strata spec, malformed config file).
    #[error("config error: {0}")]
    Config(String),

    /// The data violate a model precondition (missing column, non-finite
    /// value, outcome outside the family support, observed (Z, D) pattern
    /// incompatible with every declared stratum).
    #[error("data error: {0}")]
    Data(String),

    /// Sampler could not make progress (initialization failure, no finite
    /// starting point).
    #[error("sampler error: {0}")]
    Sampler(String),

    /// Estimand computation failed (missing contrast axis, degenerate
    /// weights).
    #[error("estimand error: {0}")]
    Estimand(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse { offset, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }
}
