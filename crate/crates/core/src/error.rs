use thiserror::Error;

use crate::expr::ExprError;

/// Failure classes. The CLI maps them onto its exit codes via [`ForgeError::class`].
#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("metric error at node {node}: {msg}")]
    Metric { node: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    LinearSolve { iterations: usize, residual: f64, best: Vec<f64> },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("spectral error: {0}")]
    Spectral(String),

    #[error("bracketing violated at node {node} on iterate {iterate}: excess {excess:.3e}")]
    Bracketing { node: usize, iterate: usize, excess: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_diff:.3e}): {context}")]
    NonConvergence { iterations: usize, last_diff: f64, context: String },

    #[error("hypothesis failure: {0}")]
    Hypothesis(String),

    #[error("vacuum data: {0}")]
    Vacuum(String),

    #[error("barrier route failure: {0}")]
    Route(String),

    #[error("at exhaustion level {level}: {source}")]
    Level { level: usize, source: Box<ForgeError> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Hypothesis,
    NonConvergence,
    Config,
}

impl ForgeError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ForgeError::Hypothesis(_)
            | ForgeError::Vacuum(_)
            | ForgeError::Route(_)
            | ForgeError::Spectral(_)
            | ForgeError::Singular(_) => ErrorClass::Hypothesis,
            ForgeError::LinearSolve { .. }
            | ForgeError::Bracketing { .. }
            | ForgeError::NonConvergence { .. } => ErrorClass::NonConvergence,
            ForgeError::Level { source, .. } => source.class(),
            ForgeError::Config(_)
            | ForgeError::Expr(_)
            | ForgeError::Metric { .. }
            | ForgeError::Data(_)
            | ForgeError::Domain(_)
            | ForgeError::Io(_) => ErrorClass::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, ForgeError>;
