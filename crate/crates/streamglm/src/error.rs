//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numeric overflow in {context} at eta = {eta}")]
    NumericOverflow { context: &'static str, eta: f64 },

    #[error("divergence at iteration {iteration}: {detail} (step size too large?)")]
    Divergence { iteration: u64, detail: String },

    #[error("empty iterate history: run with history storage enabled")]
    EmptyHistory,

    #[error("degenerate landmark set: {0}")]
    DegenerateLandmarks(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("optimizer did not converge: gradient norm {grad_norm:e} after {iterations} iterations")]
    NonConvergence { grad_norm: f64, iterations: u64 },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("malformed row at line {line}: {detail}")]
    MalformedRow { line: u64, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
