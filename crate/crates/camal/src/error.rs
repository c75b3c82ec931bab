use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid environment, configuration, or argument values.
    #[error("config: {0}")]
    Config(String),

    /// Malformed input in a text artifact (workload file, model file,
    /// manifest, sample CSV). `line` is 1-based, 0 when not line-addressable.
    #[error("parse {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    /// Corrupt or truncated binary run/filter data.
    #[error("decode {what}: {msg}")]
    Decode { what: &'static str, msg: String },

    /// Engine-level failure (storage, invariant breach surfaced as error).
    #[error("engine: {0}")]
    Engine(String),

    /// Model fitting or prediction failure.
    #[error("learner: {0}")]
    Learner(String),

    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn engine(msg: impl Into<String>) -> Self {
        Error::Engine(msg.into())
    }

    pub fn learner(msg: impl Into<String>) -> Self {
        Error::Learner(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }
}
