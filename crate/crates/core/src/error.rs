use thiserror::Error;

/// Errors raised across the model, solver and analysis layers.
#[derive(Debug, Error)]
pub enum OperonError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    Validation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("history horizon too short: {0}")]
    Horizon(String),

    #[error("solution blew up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("pivot breakdown in eigenvector back-substitution at lambda = {0}")]
    Pivot(String),

    #[error("internal numerical failure: {0}")]
    Internal(String),

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, OperonError>;

impl OperonError {
    /// Process exit status: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            OperonError::Validation(_)
            | OperonError::UnknownParameter(_)
            | OperonError::Io(_)
            | OperonError::Parse(_)
            | OperonError::Domain(_) => 2,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for OperonError {
    fn from(err: serde_json::Error) -> Self {
        OperonError::Parse(format!(
            "line {} column {}: {}",
            err.line(),
            err.column(),
            err
        ))
    }
}
