use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CrofError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CrofError {
    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("degenerate fusion: row {row} sums to a zero vector")]
    DegenerateFusion { row: usize },

    #[error("degenerate feature: adapted feature {row} has zero norm")]
    DegenerateFeature { row: usize },

    #[error("unknown {kind} `{name}` (registered: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CrofError {
    pub fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CrofError::Storage {
            path: path.into(),
            source,
        }
    }
}
