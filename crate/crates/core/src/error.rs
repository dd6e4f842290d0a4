//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad dimensions, out-of-range parameters, bad files.
    #[error("validation: {0}")]
    Validation(String),

    /// Parameter outside the mathematical domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// A numerical procedure failed (divergent quadrature, NaN, ...).
    #[error("numerical: {0}")]
    Numerical(String),

    /// The implicit-shift eigensolver did not converge.
    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    /// An eigenvalue sits at or beyond the log-det shift of the test
    /// statistic; the statistic is undefined there (supercritical regime,
    /// where PCA should be used instead).
    #[error("eigenvalue {value} at or beyond log-det shift {bound}; use PCA in this regime")]
    EigenvalueBeyondShift { value: f64, bound: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 2 for validation-class errors, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Domain(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Numerical(_)
            | Error::NoConvergence { .. }
            | Error::EigenvalueBeyondShift { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
