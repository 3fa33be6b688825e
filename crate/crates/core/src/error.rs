use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A rotated eigenvalue landed on tan(±π/2).
    #[error("pole: {0}")]
    Pole(String),

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("rotated sample set is not injective: {0}")]
    NonInjective(String),

    #[error("input is not convex: Hessian eigenvalue {eigenvalue:e} at {location:?}")]
    NonConvex { eigenvalue: f64, location: Vec<f64> },

    #[error("Newton iteration stagnated at iteration {iteration}: residual history {history:?}")]
    Stagnation { iteration: usize, history: Vec<f64> },

    #[error("Newton iteration did not reach tolerance in {iterations} iterations: residual history {history:?}")]
    MaxIterations { iterations: usize, history: Vec<f64> },

    #[error("positive branch lost at node {node:?} (sigma_1 = {sigma1:e})")]
    BranchLoss { node: Vec<usize>, sigma1: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
