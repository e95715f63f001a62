use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty series")]
    EmptySeries,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-symmetric spectrum: imaginary residue {residue:e} exceeds tolerance")]
    NonSymmetricSpectrum { residue: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("layer {layer} out of range 1..={num_layers}")]
    LayerOutOfRange { layer: usize, num_layers: usize },

    #[error("lag {lag} out of range 1..={len}")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("item id {id} out of range 0..={max}")]
    ItemOutOfRange { id: usize, max: usize },

    #[error("target is the padding id")]
    PaddingTarget,

    #[error("no negatives: contrastive loss needs at least 2 pairs, got {0}")]
    NoNegatives(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{}, line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset empty after k-core filtering (k = {0})")]
    EmptyAfterKCore(usize),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("vocabulary mismatch: {0}")]
    Vocabulary(String),

    #[error("unknown user {user}; valid dense ids are 0..{count}")]
    UnknownUser { user: String, count: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
