//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("corpus vanished: no interactions left after {min_interactions}-core filtering")]
    CorpusVanished { min_interactions: usize },

    #[error("row length mismatch for key '{key}': expected {expected} values, got {got}")]
    RowLengthMismatch {
        key: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite embedding value for key '{key}'")]
    NonFinite { key: String },

    #[error("unknown item key '{0}'")]
    UnknownItem(String),

    #[error("context table is missing occurrence (user '{user}', position {position})")]
    MissingOccurrence { user: String, position: usize },

    #[error("cannot cluster {rows} rows into {requested} centroids")]
    TooFewRows { rows: usize, requested: usize },

    #[error("degenerate covariance: fitting rows are identical")]
    DegenerateCovariance,

    #[error("whitening requires more rows ({rows}) than dimensions ({dim})")]
    TooFewWhiteningRows { rows: usize, dim: usize },

    #[error("conflict overflow: {items} distinct items share content digits {prefix:?} but the conflict alphabet holds {alphabet}")]
    ConflictOverflow {
        prefix: Vec<u32>,
        items: usize,
        alphabet: usize,
    },

    #[error("item {0} is not present in the registry")]
    ItemNotInRegistry(u32),

    #[error("semantic id collision: {sid:?} maps to items {a} and {b}")]
    SidCollision { sid: Vec<u32>, a: u32, b: u32 },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
