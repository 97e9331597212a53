//! Slice partitions as JSON:
//! `{"vocab_size", "d", "seed", "prng", "slice_of": [..], "sign_of": [..]}`.
//!
//! The arrays are authoritative; `seed` and `prng` are provenance only.

use std::path::Path;

use aggretriever_core::pruning::SlicePartition;
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_file, Error, FormatError, Result};

const FORMAT: &str = "partition file";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionJson {
    vocab_size: usize,
    d: usize,
    seed: u64,
    prng: String,
    slice_of: Vec<u32>,
    sign_of: Vec<i8>,
}

pub fn to_json(part: &SlicePartition) -> String {
    let doc = PartitionJson {
        vocab_size: part.vocab_size(),
        d: part.d(),
        seed: part.seed(),
        prng: part.prng_name().to_string(),
        slice_of: part.slice_of().to_vec(),
        sign_of: part.sign_of().to_vec(),
    };
    let mut s = serde_json::to_string(&doc).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> std::result::Result<SlicePartition, FormatError> {
    let doc: PartitionJson = serde_json::from_str(text).map_err(|e| FormatError::Invalid {
        format: FORMAT,
        detail: e.to_string(),
    })?;
    SlicePartition::from_parts(doc.vocab_size, doc.d, doc.seed, doc.slice_of, doc.sign_of).map_err(|e| {
        FormatError::Invalid {
            format: FORMAT,
            detail: e.to_string(),
        }
    })
}

pub fn read(path: &Path) -> Result<SlicePartition> {
    from_json(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write(part: &SlicePartition, path: &Path) -> Result<()> {
    write_file(path, to_json(part).as_bytes())
}
