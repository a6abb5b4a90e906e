use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed input data (non-finite entries, asymmetric matrix, ragged rows).
    #[error("invalid input: {0}")]
    Input(String),

    /// A parameter outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("matrix is singular or too ill-conditioned (lambda_min = {lambda_min:.3e}, lambda_max = {lambda_max:.3e})")]
    Singular { lambda_min: f64, lambda_max: f64 },

    /// Any other numerical breakdown.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for errors caused by the caller's data or parameters rather than
    /// by numerical breakdown.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Argument(_) | Error::Dimension { .. }
        )
    }
}

/// Non-fatal conditions recorded alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Input to a decomposition had a markedly negative eigenvalue.
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    /// Dykstra's iteration hit its cap.
    ProjectionNotConverged { iterations: usize, residual: f64 },
    /// The closed-form row projection found no admissible breakpoint and the
    /// row was solved by the active-set quadratic program instead.
    RowFallback { row: usize },
    /// The final diagonally-dominant part was pulled back into the cone.
    ConeRepair { margin_before: f64 },
    /// Negative eigenvalues of a low-rank part were clipped before factoring.
    NegativeFactorClipped { count: usize },
    /// A feature had zero pooled standard deviation and was dropped.
    FeatureDropped { index: usize },
    /// Diagonal of the low-rank part had a negative entry.
    NegativeLowRankDiagonal { index: usize, value: f64 },
}
