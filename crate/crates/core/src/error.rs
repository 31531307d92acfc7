use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("equilibrium converged to the wrong kind: {0}")]
    KindMismatch(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit failed on interval {interval}: {reason}")]
    Fit { interval: usize, reason: String },
    #[error("condition violated: {0}")]
    ConditionViolated(String),
    #[error("sign regime violated: {0}")]
    SignRegime(String),
}

pub type Result<T> = std::result::Result<T, Error>;
