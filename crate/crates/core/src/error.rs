use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
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

    #[error("non-monotonic timestamp at line {line}")]
    NonMonotonicTimestamp { line: usize },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("frame below minimum size ({width}x{height}, need at least {min}x{min})")]
    FrameTooSmall { width: usize, height: usize, min: usize },

    #[error("too many pyramid levels: level {level} would be {width}x{height}, minimum is {min}")]
    TooManyLevels {
        level: usize,
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("out-of-order timestamp: {got} s is not after {last} s")]
    OutOfOrder { got: f64, last: f64 },

    #[error("insufficient points for K (have {points}, K = {k})")]
    InsufficientPoints { points: usize, k: usize },

    #[error("invalid annotations: {0}")]
    Annotation(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
