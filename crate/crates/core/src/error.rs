use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TribeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("session {session}: missing file {path}")]
    MissingFile { session: String, path: PathBuf },

    #[error("session {session}: shape mismatch: {detail}")]
    ShapeMismatch { session: String, detail: String },

    #[error("session {session}: split leakage: video {video} is assigned to both {first} and {second}")]
    SplitLeakage {
        session: String,
        video: String,
        first: String,
        second: String,
    },

    #[error("session {0}: duplicate session id")]
    DuplicateSession(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty layer group after rounding: anchors {anchors:?} over {num_layers} layers")]
    EmptyLayerGroup { anchors: Vec<f64>, num_layers: usize },

    #[error("window [{start}, {end}) exceeds session {session} of {num_trs} TRs")]
    WindowOutOfBounds {
        session: String,
        start: usize,
        end: usize,
        num_trs: usize,
    },

    #[error("every modality is masked")]
    AllMasked,

    #[error("no activation cache: forward must run in train mode before backward")]
    MissingCache,

    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("weights were fitted on split {0}; refusing to evaluate on the same split")]
    SplitOverlap(String),

    #[error("session {0}: no BOLD targets")]
    MissingTargets(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, TribeError>;

impl TribeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TribeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        TribeError::Json {
            path: path.into(),
            source,
        }
    }
}
