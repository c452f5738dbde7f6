use thiserror::Error;

/// Crate-wide error type. Numerical routines report the residual that broke
/// the invariant they were asked to certify.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure in {context}: residual {residual:.3e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error("matrices do not commute: residual {residual:.3e} exceeds {tol:.3e}")]
    NonCommuting { residual: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive semidefinite: min eigenvalue {0:.3e}")]
    NotPsd(f64),

    #[error("pair is not complementary: {0}")]
    NotComplementary(String),

    #[error("direction is not in the critical cone: residual {0:.3e}")]
    NotCritical(f64),

    #[error("point is not feasible: {0}")]
    InfeasiblePoint(String),

    #[error("point is not stationary: {0}")]
    NotStationary(String),

    #[error("objective Hessian is not positive semidefinite: min eigenvalue {0:.3e}")]
    HessianNotPsd(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
