use thiserror::Error;

/// Errors produced by the tensor engine, the network builder, the data
/// pipeline and the trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {dim} is {got}, expected {expected}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("non-finite value in {op} input at flat index {index}")]
    NonFiniteInput { op: &'static str, index: usize },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("batch-norm statistics are uninitialized (eval mode before any training forward)")]
    UninitializedStatistics,

    #[error("network build failed at layer {layer} ({kind}): {msg}")]
    Build {
        layer: usize,
        kind: String,
        msg: String,
    },

    #[error("checkpoint magic mismatch (not a checkpoint file)")]
    CheckpointMagic,

    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),

    #[error("truncated checkpoint")]
    CheckpointTruncated,

    #[error("checkpoint CRC mismatch (file corrupted)")]
    CheckpointCrc,

    #[error("checkpoint parameter {name}: shape disagreement (stored {stored:?}, graph expects {expected:?})")]
    CheckpointShape {
        name: String,
        stored: Vec<u32>,
        expected: Vec<u32>,
    },

    #[error("checkpoint parameter {0} not present in graph")]
    CheckpointUnknownParam(String),

    #[error("checkpoint is missing parameter {0}")]
    CheckpointMissingParam(String),

    #[error("malformed PGM header: {0}")]
    PgmHeader(String),

    #[error("unsupported PNM variant {0:?} (only binary P5 is accepted)")]
    PgmVariant(String),

    #[error("unsupported PGM maxval {0} (only 255 is accepted)")]
    PgmMaxval(u32),

    #[error("PGM payload too short: expected {expected} bytes, found {found}")]
    PgmShortPayload { expected: usize, found: usize },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("insufficient pairs: need {needed}, have {have}")]
    InsufficientPairs { needed: usize, have: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
