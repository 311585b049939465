use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV data: {0}")]
    Format(String),

    #[error("unsupported audio encoding: {0}")]
    Unsupported(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("audio is empty after processing: {0}")]
    EmptyAudio(String),

    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("filterbank resolution too coarse: filter {index} has no support on the DFT grid")]
    Resolution { index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("spectral centroid undefined for an all-zero signal")]
    UndefinedCentroid,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("insufficient training data: {frames} frames for {components} components")]
    Data { frames: usize, components: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("feature configuration mismatch: model expects {expected}, features are {found}")]
    Compatibility { expected: String, found: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
