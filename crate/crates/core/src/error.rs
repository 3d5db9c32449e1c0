use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is unstable: E X(1) = {mean_input} >= 0")]
    Unstable { mean_input: f64 },

    #[error("root finder did not converge; last bracket [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("method not applicable: {0}")]
    MethodInapplicable(String),

    #[error("insufficient data: need {needed}, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("alpha = {alpha} is too close to psi(xi); phi(alpha) = {phi} vs xi = {xi}")]
    Singular { alpha: f64, phi: f64, xi: f64 },

    #[error("backend mismatch: {0}")]
    Backend(String),

    #[error("identification failed: {0}")]
    Identification(String),

    #[error("no probability mass at or above tau = {tau}")]
    InsufficientTail { tau: f64 },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics rather than of the user's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Singular { .. }
                | Error::Identification(_)
                | Error::InsufficientTail { .. }
                | Error::InsufficientData { .. }
                | Error::Unstable { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
