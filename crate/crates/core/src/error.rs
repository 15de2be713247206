use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is rank deficient: smallest singular value {smallest:e} below tolerance {tolerance:e}")]
    RankDeficient { smallest: f64, tolerance: f64 },

    #[error("residual variance is numerically zero")]
    DegenerateResidual,

    #[error("correlation matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid correlation spec: {0}")]
    SpecInvalid(String),

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("sample is empty")]
    EmptySample,

    #[error("sample contains non-finite values")]
    NonFiniteSample,

    #[error("quadrature did not converge: successive orders differ by {difference:e}")]
    QuadratureNotConverged { difference: f64 },

    #[error("power difference does not change sign on [{lower}, {upper}]")]
    NoBracket { lower: f64, upper: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Name of the subsystem that raised the error, used in CLI diagnostics.
    pub fn component(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) | Error::RankDeficient { .. } | Error::DegenerateResidual => {
                "linalg"
            }
            Error::NotPositiveDefinite(_) | Error::SpecInvalid(_) => "correlation",
            Error::ZeroVector => "sampling",
            Error::EmptySample | Error::NonFiniteSample => "diagnostics",
            Error::QuadratureNotConverged { .. } | Error::NoBracket { .. } => "asymptotics",
            Error::ConfigInvalid(_) => "monte_carlo",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
