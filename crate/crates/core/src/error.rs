use thiserror::Error;

/// Errors raised by the mechanisms, solvers and data model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { solver: &'static str, iterations: usize, residual: f64 },

    #[error("basis pursuit did not converge after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    BasisPursuit { iterations: usize, primal: f64, dual: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("net of size {required} exceeds cap {cap}")]
    NetTooLarge { required: f64, cap: usize },

    #[error("missing loss constant `{0}`")]
    MissingConstant(&'static str),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn ensure_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
