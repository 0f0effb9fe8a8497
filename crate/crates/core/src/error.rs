use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("targeted attack requires target parameters")]
    MissingTarget,

    #[error("index {index} out of range for dataset of {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("exhaustive search over {assignments} assignments exceeds the limit of {limit}")]
    InstanceTooLarge { assignments: f64, limit: usize },

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{extra} unexpected trailing bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("file length {len} is not a multiple of the {record}-byte record size")]
    RecordLength { len: usize, record: usize },

    #[error("label {label} at record {record} is out of range (max {max})")]
    LabelOutOfRange { label: u8, record: usize, max: u8 },

    #[error("class filter selected zero samples")]
    EmptyFilter,

    #[error("label map is not a bijection on [0, {0})")]
    NotBijective(usize),

    #[error("window of {window} epochs exceeds run length {epochs}")]
    WindowTooLarge { window: usize, epochs: usize },

    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("run failed ({context}): {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
