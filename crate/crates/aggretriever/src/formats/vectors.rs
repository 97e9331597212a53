//! Encoded retrieval vectors ("AGEV").
//!
//! ```text
//! "AGEV" | u32 version=1 | u32 dim | u32 d_cls | u64 count | 32-byte partition fingerprint
//! count × { u32 id_len | id | dim × f32 }      (first d_cls floats are the [CLS] part)
//! ```

use std::path::Path;

use aggretriever_core::encoder::ConcatEmbedding;
use aggretriever_core::pruning::Fingerprint;

use super::binio::{Reader, Writer};
use crate::error::{read_file, write_file, Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"AGEV";
pub const VERSION: u32 = 1;
const FORMAT: &str = "vector file";

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub dim: usize,
    pub d_cls: usize,
    pub fingerprint: Fingerprint,
    pub items: Vec<(String, ConcatEmbedding)>,
}

impl VectorSet {
    /// Collects embeddings that share one layout.
    pub fn new(dim: usize, d_cls: usize, fingerprint: Fingerprint, items: Vec<(String, ConcatEmbedding)>) -> Result<Self> {
        for (id, e) in &items {
            if e.dim() != dim || e.cls_part.len() != d_cls || e.fingerprint != fingerprint {
                return Err(Error::Usage(format!("vector `{id}` does not match the set layout")));
            }
        }
        Ok(Self {
            dim,
            d_cls,
            fingerprint,
            items,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.dim as u32);
        w.u32(self.d_cls as u32);
        w.u64(self.items.len() as u64);
        w.bytes(&self.fingerprint.0);
        for (id, e) in &self.items {
            w.str(id);
            w.f32s(&e.cls_part);
            w.f32s(&e.agg_part);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader::open(FORMAT, buf, MAGIC, VERSION)?;
        let dim = r.u32()? as usize;
        let d_cls = r.u32()? as usize;
        if d_cls > dim {
            return Err(FormatError::Invalid {
                format: FORMAT,
                detail: format!("d_cls {d_cls} exceeds dim {dim}"),
            });
        }
        let count = r.u64()?;
        let fingerprint = Fingerprint(r.take(32)?.try_into().expect("32 bytes"));
        let mut items = Vec::new();
        for _ in 0..count {
            let id = r.str("vector id")?;
            let flat = r.f32s(dim as u64)?;
            let e = ConcatEmbedding::from_flat(&flat, d_cls, fingerprint).map_err(|e| FormatError::Invalid {
                format: FORMAT,
                detail: format!("`{id}`: {e}"),
            })?;
            items.push((id, e));
        }
        r.finish()?;
        Ok(Self {
            dim,
            d_cls,
            fingerprint,
            items,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?).map_err(|e| Error::format(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }
}
