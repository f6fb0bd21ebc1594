use std::io;

use thiserror::Error;

/// Errors raised anywhere in the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid field `{field}`: {msg}")]
    Validation { field: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index build error: {0}")]
    IndexBuild(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in layer {layer}: {msg}")]
    Numeric { layer: usize, msg: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error("stale or missing forward cache: {0}")]
    Cache(String),

    #[error("routing error: {0}")]
    Routing(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Parse {
            row,
            msg: err.to_string(),
        }
    }
}
