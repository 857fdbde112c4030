use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("group `{group}` is empty")]
    EmptyGroup { group: String },

    #[error("group `{group}` references predictor {index}, but only {p} predictors exist")]
    IndexOutOfRange { group: String, index: usize, p: usize },

    #[error("group `{group}` lists predictor {index} more than once")]
    DuplicateIndex { group: String, index: usize },

    #[error("group structure has no groups")]
    NoGroups,

    #[error("invalid group weight {weight} for group `{group}`")]
    InvalidWeight { group: String, weight: f64 },

    #[error("design matrix contains a non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("response must contain both classes 0 and 1")]
    SingleClass,

    #[error("response for logistic regression must be coded 0/1 (found {0})")]
    NonBinary(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error in {path} at line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
