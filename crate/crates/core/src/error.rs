use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// The split between [`Error::is_input_error`] and the rest drives the CLI
/// exit code: bad files, columns, arguments and configs exit with 2, the
/// remainder with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
    #[error("ragged row {row}: expected {expected} cells, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("outcome column `{column}` is not binary: value `{value}` at row {row}")]
    NonBinaryOutcome {
        column: String,
        row: usize,
        value: String,
    },
    #[error("column(s) entirely missing: {}", .0.join(", "))]
    EmptyColumns(Vec<String>),
    #[error("arm column `{column}` must hold exactly two levels, found {found:?}")]
    BadArms { column: String, found: Vec<String> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("row {row} of the affinity matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("every feature in the sequence is skipped")]
    AllFeaturesSkipped,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("single-class labels: {0}")]
    SingleClass(String),
    #[error("token parse error at byte {offset}: {message}")]
    TokenParse { offset: usize, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("audit log write failed: {0}")]
    Audit(std::io::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's files, columns or settings.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv { .. }
                | Error::RaggedRow { .. }
                | Error::MissingColumn(_)
                | Error::DuplicateColumn(_)
                | Error::NonBinaryOutcome { .. }
                | Error::EmptyColumns(_)
                | Error::BadArms { .. }
                | Error::InvalidInput(_)
                | Error::InvalidConfig { .. }
                | Error::UnknownFeature(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
