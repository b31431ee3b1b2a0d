use std::path::PathBuf;

/// Errors raised while reading, writing or validating files.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    /// Well-formed input with a bad field; `field` is a dotted path such as
    /// `v_abc.timestamps[2]`.
    #[error("{path}: {field}: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: not a feature cache (magic {found:?})")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported cache version {found} (expected {expected})")]
    CacheVersion { path: PathBuf, expected: u16, found: u16 },
    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: cache holds no frames")]
    EmptyCache { path: PathBuf },
    #[error("{path}: features come from scorer {found}, run uses {expected}")]
    ScorerMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    /// A run-state snapshot that is unreadable or from another format
    /// version; `found` is `None` when no version could be read.
    #[error("{path}: run state version {found:?} cannot be loaded (expected {expected})")]
    StateVersion {
        path: PathBuf,
        expected: u32,
        found: Option<u32>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("backend {id} is unavailable: {reason}")]
    Unavailable { id: String, reason: String },
    #[error(transparent)]
    Core(#[from] densecap_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn field(path: impl Into<PathBuf>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Syntax {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// Whether the error is the caller's input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Core(_) | Error::Unavailable { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
