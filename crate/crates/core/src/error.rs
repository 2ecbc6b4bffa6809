use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unrecognized chat line: {0:?}")]
    Parse(String),
    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),
    #[error("invalid index {index} (channel has {len} messages)")]
    InvalidIndex { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("feature schema mismatch: expected {expected} features, got {actual}")]
    SchemaMismatch { expected: usize, actual: usize },
    #[error("no valid candidate slots")]
    NoValidSlots,
    #[error("parent slot {0} is not a valid candidate")]
    InvalidParentSlot(usize),
    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("partitions cover different universes ({left} vs {right} messages)")]
    UniverseMismatch { left: usize, right: usize },
    #[error("missing prediction for channel {0}")]
    MissingChannel(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Synth(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
