use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("curvature is singular at r = {r} (pole without a usable cap expansion)")]
    Singularity { r: f64 },

    #[error("insufficient data: need at least {needed} levels, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("no positive solution: {0}")]
    NoPositiveSolution(String),

    #[error("shooting diverged: {reason} (bracket {bracket:?})")]
    SolverDiverged { reason: String, bracket: (f64, f64) },

    #[error("no positive decreasing model solution on (0, {radius}]: {detail}")]
    RadiusTooLarge { radius: f64, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("no admissible neck radius down to r0 = {smallest_tested:e} ({tested} radii tested)")]
    NotAdmissible { smallest_tested: f64, tested: usize },

    #[error("eigensolver failure: {0}")]
    Solver(String),

    #[error("profile error: {0}")]
    Profile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
