use thiserror::Error;

use crate::bounds::IterateTrace;

/// Errors raised by the model, solvers and command line front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error(
        "prey density {value} is not positive{}; g(u, v) = mu v (1 - v/u) is singular",
        node.map(|n| format!(" at node {n}")).unwrap_or_default()
    )]
    Singularity { node: Option<usize>, value: f64 },

    #[error("{what} must be strictly positive, found {value} at node {node}")]
    NonPositive {
        what: &'static str,
        node: usize,
        value: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field lives on a different grid or has the wrong length: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis b < a_min/a_max violated: b = {b}, a_min/a_max = {ratio}")]
    BConditionViolated { b: f64, ratio: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("no sign change of h on [0, a_min]: h(0) = {h0}, h(a_min) = {h1}")]
    NoSignChange { h0: f64, h1: f64 },

    #[error("monotone iterates lost their ordering at iterate {iteration}: {detail}")]
    MonotonicityViolated { iteration: usize, detail: String },

    #[error("not converged after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("monotone iteration not converged after {} iterations (residual {residual:e})", trace.iterations)]
    IterationNotConverged {
        residual: f64,
        trace: Box<IterateTrace>,
    },

    #[error("relaxation not converged at t = {t} (residual {residual:e})")]
    RelaxationNotConverged { t: f64, residual: f64 },

    #[error("time step {dt:e} exceeds the diffusion stability limit {limit:e} (CFL)")]
    Cfl { dt: f64, limit: f64 },

    #[error("positivity lost at node {node} near t = {t}: {species} = {value:e}; retry with dt <= {suggested_dt:e}")]
    PositivityLost {
        node: usize,
        t: f64,
        species: &'static str,
        value: f64,
        suggested_dt: f64,
    },

    #[error("Newton solve failed ({0}); use relaxation instead")]
    NewtonFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
