use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    /// A cell could not be interpreted. `row` is the zero-based data row
    /// (the header is not counted).
    #[error("parse error at row {row}{}: {message}", column.as_ref().map(|c| format!(", column {c:?}")).unwrap_or_default())]
    Parse {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("no rows")]
    NoRows,

    #[error("shape mismatch: expected {expected} {what}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("train and test column names differ")]
    ColumnMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    Empty(String),

    #[error("fitness is not finite for vector {vector}")]
    NonFiniteFitness { vector: String },

    #[error("operation needs both classes present")]
    SingleClass,
}
