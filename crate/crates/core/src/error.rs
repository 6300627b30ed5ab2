use thiserror::Error;

/// Errors raised by the pricing toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of a function (e.g. `u'(0)`).
    #[error("domain error: {0}")]
    Domain(String),
    /// A value violates a type invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// An inconsistent or infeasible configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numeric routine failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::Config(_) => 1,
            Error::Numeric(_) => 2,
        }
    }
}
