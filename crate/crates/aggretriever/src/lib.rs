//! File formats, parallel drivers and the command-line front end for
//! `aggretriever-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod jsonl;
pub mod parallel;
pub mod partition_file;
pub mod trec;

pub use aggretriever_core as core;
pub use error::{exit, Error, FormatError, Result};
