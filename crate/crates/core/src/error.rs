use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced by `{0}`")]
    NonFinite(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty sequence: no content tokens to average")]
    EmptySequence,
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("degenerate sample: differences have zero variance")]
    DegenerateSample,
    #[error("requested subset size {0} exceeds available {1}")]
    SizeTooLarge(usize, usize),
    #[error("unknown benchmark class `{0}`")]
    UnknownBenchmarkClass(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
