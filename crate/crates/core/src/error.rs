use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Infinite divergences are not errors; they are returned as `f64::INFINITY`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid member: {0}")]
    InvalidMember(String),

    #[error("observation {observation} is incompatible with a {model} member")]
    IncompatibleObservation { model: &'static str, observation: String },

    #[error("members of different kinds: {0} vs {1}")]
    MixedModels(String, String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("matrix is not symmetric (residual {residual:.3e})")]
    Asymmetric { residual: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("quadrature failure: row-sum residual {residual:.3e} exceeds tolerance")]
    QuadratureFailure { residual: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Coarse classification used by front ends to map errors to exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Capacity(_) => ErrorKind::Capacity,
            Error::QuadratureFailure { .. }
            | Error::Convergence { .. }
            | Error::DegenerateLikelihood(_)
            | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Capacity,
    Numerical,
}

pub type Result<T> = std::result::Result<T, Error>;
