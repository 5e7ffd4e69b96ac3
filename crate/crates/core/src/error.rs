use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not converge after {iterations} iterations (target {target})")]
    Convergence { iterations: usize, target: f64 },

    #[error("step size underflow at t = {t} (h = {h}); last valid state sigma = {sigma}, F = {f}")]
    StepFailure { t: f64, h: f64, sigma: f64, f: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    MaxStepsExceeded { max_steps: usize, t: f64 },

    #[error("implicit source solve failed in cell {cell}: {reason}")]
    SourceSolve { cell: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
