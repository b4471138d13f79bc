use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("degenerate input in {op}: row {row} has zero norm")]
    ZeroRow { op: &'static str, row: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("code entry at row {row}, col {col} is {value}, expected exactly +1 or -1")]
    Encoding { row: usize, col: usize, value: f64 },

    #[error("batch of {got} rows is too small: at least {min} required")]
    InsufficientBatch { got: usize, min: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("numeric failure at epoch {epoch}, batch {batch}: {what}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("solver did not converge: {0}")]
    Convergence(String),

    #[error("rank-deficient covariance: {0}")]
    RankDeficient(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("cannot sample pairs: {0}")]
    Sampling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than the inputs' layout.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Convergence(_) | Error::RankDeficient(_)
        )
    }
}
