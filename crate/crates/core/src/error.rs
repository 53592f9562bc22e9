//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input collection has an invalid shape (empty, mismatched lengths, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// A per-feature data problem; carries the offending feature identifier.
    #[error("data error for feature '{feature}': {message}")]
    Data { feature: String, message: String },

    /// A numerical routine failed to reach its accuracy target.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Inconsistent run configuration (e.g. a method requested without its prior).
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(feature: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Data {
            feature: feature.into(),
            message: msg.into(),
        }
    }
}
