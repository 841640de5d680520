use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreError {
    /// Matrix shapes do not line up for the requested operation.
    ShapeMismatch(String),
    /// An index fell outside the declared matrix shape.
    IndexOutOfBounds(String),
    /// A structural precondition on the input data was violated.
    InvalidInput(String),
    /// A non-finite value appeared where the contract requires finite output.
    NonFinite(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            CoreError::IndexOutOfBounds(m) => write!(f, "index out of bounds: {m}"),
            CoreError::InvalidInput(m) => write!(f, "invalid input: {m}"),
            CoreError::NonFinite(m) => write!(f, "non-finite value: {m}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
