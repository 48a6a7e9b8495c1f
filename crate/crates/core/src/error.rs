use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SurvError>;

#[derive(Debug, Error)]
pub enum SurvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A pairwise metric with no admissible pairs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("schema error in {path}: {msg}")]
    Schema { path: PathBuf, msg: String },

    #[error("parse error in {path} at row {row}, column '{column}': {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SurvError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SurvError::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        SurvError::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SurvError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the data (schema, parse, invalid input).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SurvError::InvalidInput(_)
                | SurvError::Schema { .. }
                | SurvError::Parse { .. }
                | SurvError::Csv(_)
                | SurvError::Io { .. }
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, SurvError::Numeric(_) | SurvError::UndefinedMetric(_))
    }
}
