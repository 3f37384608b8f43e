use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not elliptic (trace {trace})")]
    NotElliptic { trace: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric overflow: {0}")]
    NumericOverflow(String),
    #[error("integration failed on [{from}, {to}]")]
    IntegrationFailure { from: f64, to: f64 },
    #[error("energy scan needs {needed} grid points (budget {budget}); use a finer tolerance window or narrower range")]
    Resolution { needed: usize, budget: usize },
    #[error("padding length {delta} does not fit in zero neighbourhood {zero_nbhd}")]
    Overlap { delta: f64, zero_nbhd: f64 },
    #[error("slide needs a potential period of at least 3, got {n1}")]
    Arity { n1: usize },
    #[error("normal form broke down at stage {stage}: {reason}")]
    Breakdown { stage: usize, reason: String },
    #[error("realization failed: {0}")]
    Realization(String),
    #[error("projection error: {0}")]
    Projection(String),
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("every energy was excluded at step {step}")]
    Collapse { step: usize },
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
