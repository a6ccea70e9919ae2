use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("non-numeric cell in column '{column}', row {row}: '{value}'")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("non-finite value in column '{column}', row {row}")]
    NonFinite { column: String, row: usize },

    #[error("{role} not binary: column '{column}', row {row} holds {value}")]
    NotBinary {
        role: &'static str,
        column: String,
        row: usize,
        value: f64,
    },

    #[error("nonpositive weight in column '{column}', row {row}: {value}")]
    NonPositiveWeight {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("column length mismatch: column '{column}' has {got} rows, expected {expected}")]
    ColumnLength {
        column: String,
        got: usize,
        expected: usize,
    },

    #[error("roles {0} and {1} share column '{2}'")]
    RoleOverlap(String, String, String),

    #[error("role {0} holds {1} columns, at most one allowed")]
    RoleCardinality(String, usize),

    #[error("role {0} not populated")]
    RoleMissing(String),

    #[error("length mismatch: {context} (got {got}, expected {expected})")]
    LengthMismatch {
        context: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("labels constant: cannot fit a participation model when every label is {0}")]
    ConstantLabels(f64),

    #[error("logistic regression did not converge after {0} iterations (fallback included)")]
    NoConvergence(usize),

    #[error("selection calibration did not converge: {0}")]
    CalibrationFailed(String),

    #[error("single-arm input: treatment column must contain both 0 and 1")]
    SingleArm,

    #[error("fold {0} lacks a treatment arm in its training portion")]
    FoldMissingArm(usize),

    #[error("tertile group '{0}' is missing a treatment arm (or has fewer than 2 rows in one arm)")]
    TertileMissingArm(String),

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
