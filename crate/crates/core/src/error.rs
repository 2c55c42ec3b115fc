use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("block {block} has norm {norm}, expected 1")]
    NormViolation { block: usize, norm: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("could not draw a non-zero gaussian vector after {0} attempts")]
    ZeroVector(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("objective returned non-finite value {value}")]
    ObjectiveNonFinite { value: f64 },

    #[error("optimizer did not converge (terminated by {0})")]
    NotConverged(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("tol = {tol} is below p + 1 = {min}")]
    TolTooSmall { tol: u64, min: u64 },

    #[error("covariate projection {value} exceeds the overflow guard of 700")]
    OverflowGuard { value: f64 },

    #[error("observed transition {from} -> {to} has probability 0")]
    ZeroProbability { from: usize, to: usize },

    #[error("no coefficient vector for transition {from} -> {to}")]
    MissingCoefficient { from: usize, to: usize },

    #[error("self-transition probability of state {0} is 0")]
    ZeroSelfTransition(usize),

    #[error("invalid state {0}")]
    InvalidState(usize),

    #[error("event log is empty")]
    EmptyLog,

    #[error("covariate column {0} has zero standard deviation")]
    DegenerateColumn(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::TolTooSmall { .. } | Error::InvalidState(_) => {
                ErrorClass::Usage
            }
            Error::ObjectiveNonFinite { .. }
            | Error::NotConverged(_)
            | Error::OverflowGuard { .. }
            | Error::ZeroProbability { .. }
            | Error::ZeroSelfTransition(_)
            | Error::ZeroVector(_)
            | Error::NormViolation { .. }
            | Error::Bootstrap(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
