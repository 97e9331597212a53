use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const FORMAT: i32 = 3;
    pub const VALIDATION: i32 = 4;
}

/// Malformed file contents. Each variant names the format it came from.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{format}: bad magic {found:?}")]
    BadMagic { format: &'static str, found: [u8; 4] },
    #[error("{format}: unsupported version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("{format}: truncated at byte {offset}")]
    Truncated { format: &'static str, offset: usize },
    #[error("{format}: {what}: declared {declared}, found {found}")]
    SizeMismatch {
        format: &'static str,
        what: String,
        declared: u64,
        found: u64,
    },
    #[error("{format}: duplicate name `{name}`")]
    DuplicateName { format: &'static str, name: String },
    #[error("{format}: invalid UTF-8 in {what}")]
    InvalidUtf8 { format: &'static str, what: &'static str },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected}")]
    BadShape {
        name: String,
        expected: String,
        found: Vec<u64>,
    },
    #[error("{format}: line {line}: {detail}")]
    Line {
        format: &'static str,
        line: usize,
        detail: String,
    },
    #[error("{format}: {detail}")]
    Invalid { format: &'static str, detail: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Core(#[from] aggretriever_core::Error),
    #[error("{context}: {source}")]
    Invalid {
        context: String,
        source: aggretriever_core::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn invalid(context: impl Into<String>, source: aggretriever_core::Error) -> Self {
        Error::Invalid {
            context: context.into(),
            source,
        }
    }

    /// Missing inputs are usage errors; other IO failures get a generic code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => exit::USAGE,
            Error::Io { .. } => exit::IO,
            Error::Format { .. } => exit::FORMAT,
            Error::Core(_) | Error::Invalid { .. } => exit::VALIDATION,
            Error::Usage(_) => exit::USAGE,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
