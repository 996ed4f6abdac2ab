use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed {what} in {}: {reason}", .path.display())]
    Malformed {
        what: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("PLY layout mismatch: missing property `{0}`")]
    MissingField(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] ::image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
