use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The weight profile has a vanishing or negative jump, so the delay
    /// operator has no bounded additive symmetrization.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("element violates domain constraints (max residual {max_residual:e}): {detail}")]
    DomainViolation { max_residual: f64, detail: String },

    #[error("integration blew up at t = {t}")]
    Blowup { t: f64 },

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("not enough roots to decide: {0}")]
    NeedsMoreRoots(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
