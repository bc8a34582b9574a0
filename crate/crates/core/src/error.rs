use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward target is invalid: {0}")]
    BackwardTarget(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),

    #[error("no decodable images under {0}")]
    NoImages(PathBuf),

    #[error("{failed} of {total} image files failed to decode")]
    TooManyFailures { failed: usize, total: usize },

    #[error("class {0} has no records")]
    EmptyClass(u8),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model has not been trained")]
    Untrained,

    #[error("{0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
