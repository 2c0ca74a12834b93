use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fluid parameters: {0}")]
    InvalidParams(String),

    /// The potential is not differentiable where `|X_ν| = 0`.
    #[error("gradient requested at a point where |X_nu| = 0")]
    DegenerateAtZero,

    #[error("difference quotient increased from {previous} to {current} at lambda = 2^-{k}")]
    NonMonotoneQuotient { k: u32, previous: f64, current: f64 },

    #[error("unstable step at t = {t}: max |u| = {max_u} exceeds {limit}")]
    UnstableStep { t: f64, max_u: f64, limit: f64 },

    #[error("bisection failed: {0}")]
    BisectionFailure(String),

    #[error("pressure solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    PoissonNoConvergence { iterations: usize, residual: f64 },

    #[error("nonlinear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
