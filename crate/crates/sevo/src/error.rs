//! Error type shared by every module in the crate.

use thiserror::Error;

/// Unified error for graph construction, transforms, optimizer steps, and IO.
#[derive(Debug, Error)]
pub enum SevoError {
    /// Operand dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An input value violates a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A dense materialization would exceed the configured entry cap.
    #[error("dense materialization of {rows}x{cols} exceeds cap of {cap} entries")]
    DenseCapExceeded {
        rows: usize,
        cols: usize,
        cap: usize,
    },

    /// A matrix required to be symmetric is not, within tolerance.
    #[error("matrix is not symmetric: max |A - A^T| entry is {max_diff:.3e}")]
    Asymmetric { max_diff: f64 },

    /// A text input could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A computation produced non-finite values or failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A checkpoint or data file does not match what the caller expects.
    #[error("incompatible file: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SevoError>;
