use thiserror::Error;

/// Errors raised by the sensing and beamforming pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsacError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid distance {0} m")]
    InvalidDistance(f64),
    #[error("panel {0} cannot be used here")]
    InvalidPanel(usize),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("degenerate subspace: {0}")]
    DegenerateSubspace(String),
    #[error("ill-conditioned {what} (condition number {condition:.3e})")]
    IllConditioned { what: &'static str, condition: f64 },
    #[error("no feasible candidate for user {user}")]
    MatchingFailure { user: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("plot error: {0}")]
    Plot(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IsacError {
    fn from(e: std::io::Error) -> Self {
        IsacError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IsacError>;
