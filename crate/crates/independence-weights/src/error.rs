//! Error type shared across the crate.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("missing value at data row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },

    #[error("invalid value '{value}' at data row {row}, column '{column}'")]
    InvalidValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate column '{0}': zero variance under the given weights")]
    DegenerateColumn(String),

    #[error("no kernel mass at grid point {0}")]
    NoLocalData(f64),

    #[error("infeasible equality constraints: {0}")]
    Infeasible(String),

    #[error("deterministic exposure model: residual variance is zero")]
    DeterministicExposure,

    #[error("bootstrap failures ({failures}) exceeded the allowed maximum ({max_failures})")]
    BootstrapFailures { failures: usize, max_failures: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
