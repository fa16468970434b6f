use thiserror::Error;

use crate::metrics::EvaluationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A covariance-matrix quantity left its physical domain.
    #[error("numerical domain error in {context}: {detail}")]
    NumericalDomain {
        context: &'static str,
        detail: String,
    },

    /// State learning finished but the classifier failed the AUC gate.
    #[error("state learning rejected: average AUC {auc:.4} below threshold {threshold:.4}")]
    LearningRejected {
        auc: f64,
        threshold: f64,
        report: Box<EvaluationReport>,
    },

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
