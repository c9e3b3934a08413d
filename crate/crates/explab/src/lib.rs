//! Convergence-order lab: problem registry, reference solutions, sweep
//! runner, report emission, and the acceptance suite behind `explab verify`.

pub mod acceptance;
pub mod config;
pub mod problems;
pub mod reference;
pub mod report;
pub mod sweep;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Lib(#[from] expint::Error),

    #[error("configuration error: {0}")]
    BadConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
