use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    InvalidArgument(String),
    /// Every position of a sequence is masked out of pooling.
    EmptySequence,
    EmptyBatch,
    TokenOutOfRange { token: u32, vocab_size: usize },
    DuplicateId(String),
    /// Query and index were encoded with different slice partitions.
    PartitionMismatch,
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            })
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::EmptySequence => f.write_str("no poolable token positions (all masked)"),
            Error::EmptyBatch => f.write_str("training batch has no queries"),
            Error::TokenOutOfRange { token, vocab_size } => {
                write!(f, "token id {token} out of range for vocabulary of {vocab_size}")
            }
            Error::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            Error::PartitionMismatch => {
                f.write_str("query was encoded with a different slice partition than the index")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}
