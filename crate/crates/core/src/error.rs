use thiserror::Error;

/// Errors raised by the geometry, quadrature, asymptotic and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Non-finite coordinates or otherwise malformed input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A precondition on the argument domain was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a singular point of a closed-form expression.
    #[error("singular evaluation: {0}")]
    Singularity(String),

    /// Least-squares design matrix without full column rank.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    /// Configuration text or command-line values that do not validate.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite components: {values:?}")))
    }
}
