use thiserror::Error;

use crate::measures::QuantileGrid;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid quantile grid: {0}")]
    InvalidGrid(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("unbalanced instance: source mass {sources}, sink mass {sinks}")]
    Unbalanced { sources: f64, sinks: f64 },

    #[error("step restriction violated: 12*tau*lambda_minus = {value} > 1 (tau = {tau}, lambda_minus = {lambda_minus})")]
    StepRestriction {
        tau: f64,
        lambda_minus: f64,
        value: f64,
    },

    /// The plan handed to the dual recovery is not optimal.
    #[error("dual infeasible after potential recovery (max violation {violation:e})")]
    DualInfeasible { violation: f64 },

    #[error("inner solver did not converge{}: {iters} iterations, residual {residual:e}", step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    NoConvergence {
        step: Option<usize>,
        iters: usize,
        residual: f64,
        last: Box<QuantileGrid>,
    },

    #[error("particle ordering violated at t = {time}: gap {gap:e} between particles {left} and {right}")]
    OrderViolation {
        time: f64,
        left: usize,
        right: usize,
        gap: f64,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
