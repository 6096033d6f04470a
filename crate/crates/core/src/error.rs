use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum LadyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("frames out of order: {0}")]
    Ordering(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid scene: {0}")]
    Scene(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LadyError {
    /// Process exit code for this error class. Every class maps to a
    /// distinct nonzero value; 2 is left to argument-parsing failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LadyError::Dimension(_) => 3,
            LadyError::Config(_) => 4,
            LadyError::Contract(_) => 5,
            LadyError::Numeric(_) => 6,
            LadyError::Ordering(_) => 7,
            LadyError::InsufficientData(_) => 8,
            LadyError::Scene(_) => 9,
            LadyError::Io(_) => 10,
            LadyError::Json(_) => 11,
            LadyError::Csv(_) => 12,
        }
    }
}

pub type Result<T, E = LadyError> = std::result::Result<T, E>;

pub(crate) fn dim_err(what: impl Into<String>) -> LadyError {
    LadyError::Dimension(what.into())
}
