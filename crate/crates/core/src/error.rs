use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecError {
    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("singular Lagrange basis: {0}")]
    SingularBasis(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("non-finite right-hand side at t = {t}, iteration {iteration}, node {node}")]
    NumericalFailure { t: f64, iteration: usize, node: usize },

    #[error("integration failed at step {step}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<DecError>,
    },

    #[error("unsupported export: {0}")]
    UnsupportedExport(String),

    #[error("lumped mass invalid: {0}")]
    LumpingInvalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DecError {
    fn from(e: std::io::Error) -> Self {
        DecError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DecError>;
