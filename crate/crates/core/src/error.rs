use thiserror::Error;

/// Errors raised by the library. Solver non-convergence is not an error; it is
/// reported through [`crate::solver::SolveStatus`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PtlabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid index set: {0}")]
    InvalidIndices(String),

    #[error("desk-scale guard exceeded: {guard} (limit {limit}, requested {requested})")]
    GuardExceeded {
        guard: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("no bracket: target probability {q_star} lies outside [{q_min}, {q_max}]")]
    NoBracket { q_star: f64, q_min: f64, q_max: f64 },

    #[error("quantal fit impossible: {0}")]
    Separation(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, PtlabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PtlabError {
    PtlabError::InvalidArgument(msg.into())
}
