use thiserror::Error;

/// Errors raised while building or evaluating a scenario.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unstable Monte Carlo estimate for cell {cell}, UE {ue}: {diagnostics}")]
    UnstableEstimate {
        cell: usize,
        ue: usize,
        diagnostics: String,
    },

    #[error("fixed point for cell {cell} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        cell: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("fixed-point pathology in cell {cell}: Delta = {delta:e}")]
    DegenerateDelta { cell: usize, delta: f64 },

    #[error("favorable-propagation premise violated in cell {cell}: max cross product {max_cross:e}")]
    PremiseViolation { cell: usize, max_cross: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("output error: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
