//! Error type shared across the crate.

use std::fmt;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong when building scenarios or running the
/// numerical kernel and the simulation loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two quantities that must agree in size do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// An input contained NaN or an infinity.
    NonFinite { what: &'static str },
    /// A matrix that must be symmetric is not (beyond tolerance).
    NotSymmetric { max_asymmetry: f64 },
    /// A basis violated orthonormality or the sign convention.
    InvalidBasis { reason: String },
    /// A parameter fell outside its documented range.
    InvalidParameter { what: String },
    /// An operation that needs at least one observation got none.
    EmptyHistory,
    /// File I/O failed (message carries the underlying error text).
    Io(String),
    /// JSON (de)serialization failed.
    Json(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(
                f,
                "dimension mismatch in {what}: expected {expected}, got {got}"
            ),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::NotSymmetric { max_asymmetry } => {
                write!(
                    f,
                    "matrix is not symmetric (max |M[i,j]-M[j,i]| = {max_asymmetry:e})"
                )
            }
            Error::InvalidBasis { reason } => write!(f, "invalid basis: {reason}"),
            Error::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            Error::EmptyHistory => write!(f, "operation requires at least one observation"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
            Error::Json(msg) => write!(f, "json error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
