use thiserror::Error;

/// Crate-wide error type.
///
/// `Shape` is raised when operand dimensions are incompatible, `Numeric` when
/// a computation produced NaN/Inf where a finite value is required, and
/// `Contract` when a caller violated a documented precondition (non-scalar
/// backward root, empty loss batch, out-of-bound noise override, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
