use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = KmfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum KmfError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unlinkable label '{0}': no component is present in the knowledge graph")]
    UnlinkableLabel(String),

    #[error("empty topic neighborhood for label '{0}'")]
    EmptyNeighborhood(String),

    #[error("embedding for '{word}' has length {found}, expected {expected}")]
    EmbeddingDimension {
        word: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cosine similarity of a zero-norm vector")]
    ZeroNorm,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid class split: {0}")]
    Split(String),

    #[error("class '{0}' has no training nodes")]
    EmptyClass(String),

    #[error("requested {requested} negatives but only {available} other training nodes exist")]
    InsufficientNegatives { requested: usize, available: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("target class set is empty")]
    EmptyTargetSet,

    #[error("prediction/truth mismatch: {0}")]
    IdMismatch(String),

    #[error("class '{0}' has no incident edges")]
    NoEdgesForClass(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl KmfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KmfError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        KmfError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
