use thiserror::Error;

/// Errors raised by the analysis routines.
///
/// Infeasible thresholds are not errors; see [`crate::solvers::RowOutcome`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variable roles differ between samples: {0}")]
    RoleMismatch(String),

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("covariate covariance block is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularCovariates { condition: f64 },

    #[error("treatment indicator is collinear with the covariates (Schur complement {value:e})")]
    CollinearTreatment { value: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        field,
        reason: reason.into(),
    }
}
