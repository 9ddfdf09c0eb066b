use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("negative density {0} passed to harvest rule")]
    NegativeDensity(f64),

    #[error("stability constraint violated: dt * rate bound = {0} > 1")]
    Stability(f64),

    #[error("pulse applied off schedule at t = {0}")]
    OffSchedule(f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("route unavailable: {0}")]
    RouteUnavailable(String),

    #[error("root not bracketed: {0}")]
    NoRoot(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("monotone iteration lost monotonicity at iterate {iterate} (excess {excess:e})")]
    NotMonotone { iterate: usize, excess: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
