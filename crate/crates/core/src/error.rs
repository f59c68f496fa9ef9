use std::io;

use thiserror::Error;

/// Errors raised by the numerical kernels and the file loaders.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the set where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration or precondition on sizes/tolerances.
    #[error("configuration error: {0}")]
    Config(String),
    /// The transport problem is infeasible or the solver broke down.
    #[error("solver error: {0}")]
    Solver(String),
    #[error("entropic solver did not converge: marginal violation {violation:.3e} > tol {tol:.3e} after {iterations} iterations")]
    Convergence {
        violation: f64,
        tol: f64,
        iterations: usize,
    },
    /// More images per atom than the continuum theory allows; the mesh is under-resolved.
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("direction pair is not null: <p, DDc pbar> = {0:.3e}")]
    Nullity(f64),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Error {
    /// Process exit status: 1 configuration, 2 invariant, 3 solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) => 1,
            Error::Extraction(_) | Error::InsufficientData(_) | Error::Nullity(_) => 2,
            Error::Solver(_) | Error::Convergence { .. } => 3,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 4,
        }
    }
}
