//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: need at least {min} interior points per direction, got {got}")]
    GridTooSmall { min: usize, got: usize },

    #[error("unsupported boundary pair: {0}")]
    UnsupportedBoundary(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("X_alpha norm requires an operator with spectral data")]
    UnsupportedNorm,

    #[error("X_alpha norm needs omega - lambda > 0; got {0}")]
    InvalidShift(f64),

    #[error("confluent quadrature nodes (minimum separation {0:.3e})")]
    ConfluentNodes(f64),

    #[error("at most 8 quadrature nodes are supported, got {0}")]
    TooManyNodes(usize),

    #[error("invalid node set: {0}")]
    InvalidNodes(String),

    #[error("invalid correction: {0}")]
    InvalidCorrection(String),

    #[error("insufficient boundary/source data: {0}")]
    InsufficientData(String),

    #[error("elliptic solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverStalled { residual: f64, iterations: usize },

    #[error("invalid step sequence: {0}")]
    InvalidStepSequence(String),

    #[error("state diverged (non-finite) at step {step}")]
    Diverged { step: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("method/problem mismatch: {0}")]
    InvalidMethod(String),
}

pub type Result<T> = std::result::Result<T, Error>;
