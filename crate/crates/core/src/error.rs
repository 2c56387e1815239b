//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV row or config field could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Parsed data violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Config document is missing required content or is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// Least-squares system has fewer samples than coefficients.
    #[error("fit error: {0}")]
    Fit(String),

    /// Design matrix condition estimate exceeds the trust threshold.
    #[error("ill-conditioned fit (condition estimate {cond:.3e}): reduce degree_v/degree_d")]
    IllConditioned { cond: f64 },

    /// Tensor or layer shape disagreement.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite value encountered during optimization.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Checkpoint file is malformed or inconsistent with its spec.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Input data is empty where at least one element is required.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Synthetic data generation could not proceed.
    #[error("generation error: {0}")]
    Generation(String),

    #[error("unsupported window {window}: window must factor into 3s and 5s (e.g. {supported})")]
    UnsupportedWindow { window: usize, supported: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
