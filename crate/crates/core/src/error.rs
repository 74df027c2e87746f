use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or missing configuration (stopword files, config manifests, parameter ranges).
    #[error("configuration error: {0}")]
    Config(String),

    /// Corpus, qrels, topics or pair files that violate their format or preconditions.
    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("index file error: {0}")]
    IndexFormat(String),

    #[error("index format version {found} is not supported (expected {expected})")]
    IndexVersion { found: u32, expected: u32 },

    /// The caller asked for something the operation cannot do with the given inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// Generator or scorer could not be reached, or timed out. Retriable.
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },

    /// A response arrived but does not follow the wire schema.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The service answered with an explicit error body.
    #[error("service error [{code}]: {message}")]
    Service { code: String, message: String },

    #[error("no fixture entry for prompt sha256 {0}")]
    FixtureMiss(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("run file validation failed: {0}")]
    RunFormat(String),

    #[error("{path}: {source}")]
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

    /// Transport failures are the only class worth retrying.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}
