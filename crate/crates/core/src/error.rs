use thiserror::Error;

use crate::solvers::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular matrix: pivot {pivot:e} in column {column} is below the scaled threshold")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error(
        "power iteration did not converge after {iterations} iterations; \
         spectral radius lies in [{lower:e}, {upper:e}]"
    )]
    SpectralNoConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },

    #[error("{method:?} iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        method: crate::solvers::Method,
        iterations: usize,
        residual: f64,
        report: Box<SolveReport>,
    },

    /// Newton reached the residual tolerance but the Jacobian at the limit is
    /// numerically singular, so the limit is not a regular root.
    #[error(
        "near-singular Jacobian at the Newton limit after {iterations} iterations: \
         ||L^-1|| = {ell_hat:e}, 4 l^2 b gamma = {kantorovich:e}"
    )]
    NearSingularJacobian {
        iterations: usize,
        ell_hat: f64,
        kantorovich: f64,
    },

    #[error("invalid rates: {0}")]
    InvalidRates(String),

    #[error("perturbation bound inadmissible: {0}")]
    BoundInadmissible(String),

    #[error("relative bound undefined: ||x*|| = 0")]
    UndefinedRelative,

    #[error("perturbation too large: {0}")]
    PerturbationTooLarge(String),

    #[error("offspring distribution of phase {phase} has mass deviation {deviation:e}")]
    InvalidDistribution { phase: usize, deviation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
