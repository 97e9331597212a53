//! Flat index file ("AGIX").
//!
//! ```text
//! "AGIX" | u32 version=1 | u32 dim | u64 count | 32-byte partition fingerprint
//! count × { u32 id_len | id bytes | dim × f32 }
//! ```

use std::path::Path;

use aggretriever_core::index::{FlatIndex, Fingerprint};

use super::binio::{Reader, Writer};
use crate::error::{read_file, write_file, Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"AGIX";
pub const VERSION: u32 = 1;
const FORMAT: &str = "index file";

pub fn to_bytes(index: &FlatIndex) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u32(index.dim() as u32);
    w.u64(index.len() as u64);
    w.bytes(&index.fingerprint().0);
    for (row, id) in index.ids().iter().enumerate() {
        w.str(id);
        w.f32s(index.vector(row));
    }
    w.0
}

pub fn from_bytes(buf: &[u8]) -> std::result::Result<FlatIndex, FormatError> {
    let mut r = Reader::open(FORMAT, buf, MAGIC, VERSION)?;
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    let fingerprint = Fingerprint(r.take(32)?.try_into().expect("32 bytes"));
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for _ in 0..count {
        ids.push(r.str("document id")?);
        data.extend(r.f32s(dim as u64)?);
    }
    r.finish()?;
    FlatIndex::from_raw(dim, ids, data, fingerprint).map_err(|e| match e {
        aggretriever_core::Error::DuplicateId(name) => FormatError::DuplicateName { format: FORMAT, name },
        other => FormatError::Invalid {
            format: FORMAT,
            detail: other.to_string(),
        },
    })
}

pub fn read(path: &Path) -> Result<FlatIndex> {
    from_bytes(&read_file(path)?).map_err(|e| Error::format(path, e))
}

pub fn write(index: &FlatIndex, path: &Path) -> Result<()> {
    write_file(path, &to_bytes(index))
}
