use thiserror::Error;

/// Errors produced by the templink core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {msg}")]
    MalformedRow { path: String, line: usize, msg: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid window: [{0}, {1})")]
    InvalidWindow(i64, i64),

    #[error("node id {0} out of range (n = {1})")]
    NodeOutOfRange(u32, u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
