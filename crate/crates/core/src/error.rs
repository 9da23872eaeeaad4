use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range (limit {limit})")]
    Bounds { index: usize, limit: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pool entry {index} missing (pool has {len} entries)")]
    MissingPoolEntry { index: usize, len: usize },

    #[error("non-finite value produced during fusion")]
    NumericOverflow,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("label at position {position} is {value}, expected 0 or 1")]
    NonBinaryLabel { position: usize, value: u8 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("degenerate task: training labels contain a single class")]
    DegenerateTask,

    #[error("empty population")]
    EmptyPopulation,

    #[error("cannot select {wanted} individuals from {available}")]
    Size { wanted: usize, available: usize },

    #[error("{}: format error at byte {offset}: {message}", path.display())]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
