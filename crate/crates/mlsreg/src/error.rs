use std::path::PathBuf;

/// What went wrong while decoding a PLY file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlyErrorKind {
    MalformedHeader,
    UnsupportedProperty,
    MissingProperty,
    Truncated,
    MalformedValue,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `line` is 1-based within the header or ASCII body; `byte` is the
    /// offset into the file where decoding stopped.
    #[error("{path}: {kind:?} at {}: {message}", location(*line, *byte))]
    Ply {
        path: PathBuf,
        kind: PlyErrorKind,
        line: Option<usize>,
        byte: Option<u64>,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    Config {
        path: PathBuf,
        line: usize,
        #[source]
        source: mlsreg_core::Error,
    },
    #[error("environment variable {var}: {source}")]
    Env {
        var: String,
        #[source]
        source: mlsreg_core::Error,
    },
    #[error(transparent)]
    Core(#[from] mlsreg_core::Error),
    #[error("{0}")]
    Usage(String),
}

fn location(line: Option<usize>, byte: Option<u64>) -> String {
    match (line, byte) {
        (Some(l), Some(b)) => format!("line {l}, byte {b}"),
        (Some(l), None) => format!("line {l}"),
        (None, Some(b)) => format!("byte {b}"),
        (None, None) => "unknown offset".into(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
