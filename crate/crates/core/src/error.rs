use thiserror::Error;

/// Broad failure category, used for CLI exit codes and FFI error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("label not binary: column `{column}` has {count} distinct values")]
    LabelNotBinary { column: String, count: usize },
    #[error("no rows")]
    NoRows,
    #[error("no feature columns")]
    NoFeatures,
    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("action column `{column}`: {message}")]
    BadAction { column: String, message: String },
    #[error("invalid encoding for column `{column}`: {message}")]
    BadEncoding { column: String, message: String },
    #[error("value `{value}` in column `{column}` (row {row}) is outside the declared levels")]
    UnknownLevel {
        column: String,
        row: usize,
        value: String,
    },
    #[error("invalid fold request: {0}")]
    BadFolds(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("quasi-complete separation: fitted probabilities reached 0 or 1 (|linear predictor| {max_eta:.1}) and coefficients diverge")]
    Separation { max_eta: f64, deviance: f64 },
    #[error("weighted normal equations are singular (collinear or constant columns)")]
    Singular,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("non-finite input at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("fold {fold} is missing one class; use stratified folds")]
    FoldMissingClass { fold: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error("feature selection step {step}: {source}")]
    Selection {
        step: usize,
        #[source]
        source: GlmError,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scorecard: {0}")]
    Scorecard(String),
    #[error("policy evaluation: {0}")]
    Policy(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Data(_) | Error::Json(_) | Error::Scorecard(_) | Error::Policy(_) => {
                ErrorKind::Data
            }
            Error::Glm(GlmError::InvalidArgument(_)) | Error::InvalidArgument(_) => {
                ErrorKind::Usage
            }
            Error::Glm(GlmError::SingleClass) | Error::Glm(GlmError::FoldMissingClass { .. }) => {
                ErrorKind::Data
            }
            Error::Glm(_) | Error::Selection { .. } | Error::Numerical(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
