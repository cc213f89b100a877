use std::path::PathBuf;

/// Errors produced anywhere in the retrieval engine.
///
/// The variants are grouped so the CLI can map them onto exit codes:
/// configuration problems, data/format problems and numeric failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("count {0} has no ordinal/number word (supported: 1..=8)")]
    UnsupportedOrdinal(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("batch too small: need at least 2 pairs, got {0}")]
    BatchTooSmall(usize),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("cannot attribute sentence to a topic or structure template: {0:?}")]
    Tagging(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset: offset as u64,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
