use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("predicted trajectory diverged at step {step} (non-finite state)")]
    DivergedTrajectory { step: usize },

    #[error("non-finite plant state at t = {t:.3} s")]
    NonFinitePlant { t: f64 },

    #[error("decision vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver line search failed at t = {t:.3} s after {iterations} iterations (residual {residual:.3e})")]
    LineSearchFailure { t: f64, iterations: usize, residual: f64 },

    #[error("scenario parse error in {path}: {message}")]
    Scenario { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Short machine-readable tag used by the command line tools.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid-config",
            Error::DivergedTrajectory { .. } => "diverged-trajectory",
            Error::NonFinitePlant { .. } => "non-finite-plant",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::LineSearchFailure { .. } => "line-search-failure",
            Error::Scenario { .. } => "scenario",
            Error::Io { .. } => "io",
        }
    }
}
