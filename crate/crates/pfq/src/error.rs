//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two families mirrored by the CLI exit codes:
/// domain/precondition violations (exit code 1) and numerical failures
/// discovered at run time (exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested operation is not defined for this process family.
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    /// A stated precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A discretization is too coarse to resolve the requested quantity.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// An iteration failed to converge within its budget.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A numerical computation produced an invalid result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A linear-algebra operation failed (singular matrix, failed factorization).
    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code for this error: 1 for domain/precondition problems,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::UnsupportedFamily(_)
            | Error::Precondition(_)
            | Error::Resolution(_)
            | Error::Io(_)
            | Error::Json(_) => 1,
            Error::Convergence(_) | Error::Numerical(_) | Error::LinearAlgebra(_) => 2,
        }
    }

    /// Short machine-readable kind tag used in error JSON artifacts.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::UnsupportedFamily(_) => "unsupported_family",
            Error::Precondition(_) => "precondition",
            Error::Resolution(_) => "resolution",
            Error::Convergence(_) => "convergence",
            Error::Numerical(_) => "numerical",
            Error::LinearAlgebra(_) => "linear_algebra",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
