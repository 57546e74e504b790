use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("spec file error: {0}")]
    SpecFormat(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("missing `day` column")]
    MissingDayColumn,
    #[error("variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },
    #[error("row {row}, variable `{name}`: {reason}")]
    InvalidValue {
        row: usize,
        name: String,
        reason: String,
    },
    #[error("day indices are not monotone: {prev} followed by {next}")]
    NonMonotoneDays { prev: i64, next: i64 },
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),
    #[error("non-positive diagonal entry {value} at position {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("graph is non-decomposable")]
    NonDecomposable,
    #[error("singular matrix ({0})")]
    Singular(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no snapshots span change-point day {0}")]
    NoSnapshots(i64),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::SpecFormat(_) => "spec_format",
            Error::UnknownColumn(_) => "unknown_column",
            Error::MissingDayColumn => "missing_day_column",
            Error::InvalidVariable { .. } => "invalid_variable",
            Error::InvalidValue { .. } => "invalid_value",
            Error::NonMonotoneDays { .. } => "non_monotone_days",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::NonPositiveDiagonal { .. } => "non_positive_diagonal",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NonDecomposable => "non_decomposable",
            Error::Singular(_) => "singular",
            Error::Config(_) => "config",
            Error::NoSnapshots(_) => "no_snapshots",
            Error::Invalid(_) => "invalid",
        }
    }
}
