use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input vector contained NaN or an infinity.
    #[error("non-finite component at index {index}")]
    NonFinite { index: usize },

    /// A parameter was outside its documented range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Two inputs that must agree on dimension did not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A collection that must be nonempty was empty.
    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A Gaussian mechanism with zero noise has unbounded privacy loss.
    #[error("infinite privacy budget: noise scale is zero")]
    InfiniteBudget,

    /// Configuration could not be parsed or failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// The privacy budget is too small to run even a single round.
    #[error("privacy budget infeasible: {0}")]
    BudgetInfeasible(String),

    /// A binary dump could not be decoded.
    #[error("malformed binary dump: {0}")]
    Format(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
