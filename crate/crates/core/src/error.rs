//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (non-positive scale, empty list, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value is unusable as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// Task data violates a dataset-level invariant (e.g. overlapping tasks).
    #[error("data error: {0}")]
    Data(String),

    /// An API was called out of protocol order (e.g. sampling an empty memory).
    #[error("usage error: {0}")]
    Usage(String),

    /// A computation produced non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A serialized artifact could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
