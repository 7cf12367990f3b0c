use alloc::string::String;

/// Failures raised by model construction and the equilibrium solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("table violates the externality assumptions: {0}")]
    Shape(String),
    #[error("degenerate model: R_L = {r_l} does not exceed S_A = {s_a}")]
    DegenerateModel { r_l: f64, s_a: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("best-response brackets did not meet: gap {gap:e} after {iterations} rounds")]
    MultipleEquilibria { gap: f64, iterations: usize },
    #[error("invalid distribution: {0}")]
    Distribution(String),
}

pub type Result<T> = core::result::Result<T, Error>;
