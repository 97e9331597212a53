//! Per-document contextualized token embeddings ("AGED").
//!
//! ```text
//! "AGED" | u32 version=1 | u32 d_model | u32 vocab_size | u32 max_len
//!        | u32 producer_len | producer (UTF-8) | u64 count
//! count × { u32 id_len | id | u32 len | len × u32 token_id | len × u8 special (0/1)
//!           | len·d_model × f32 embeddings (row-major) | d_model × f32 cls }
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use aggretriever_core::lexrep::TokenEmbeddingSequence;
use aggretriever_core::linalg::Matrix;

use super::binio::{Reader, Writer};
use crate::error::{read_file, write_file, Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"AGED";
pub const VERSION: u32 = 1;
const FORMAT: &str = "embedding dump";

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub id: String,
    pub token_ids: Vec<u32>,
    pub special_mask: Vec<bool>,
    /// `len × d_model`, row-major.
    pub embeddings: Vec<f32>,
    pub cls: Vec<f32>,
}

impl DumpRecord {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn to_sequence(&self) -> aggretriever_core::Result<TokenEmbeddingSequence> {
        self.to_sequence_truncated(self.len())
    }

    /// The first `max_len` positions only.
    pub fn to_sequence_truncated(&self, max_len: usize) -> aggretriever_core::Result<TokenEmbeddingSequence> {
        let d = self.cls.len();
        let n = self.len().min(max_len);
        let short = |what, expected, found| aggretriever_core::Error::DimensionMismatch { what, expected, found };
        let rows = self
            .embeddings
            .get(..n * d)
            .ok_or(short("embedding values", n * d, self.embeddings.len()))?;
        if self.special_mask.len() < n {
            return Err(short("special mask", n, self.special_mask.len()));
        }
        let m = Matrix::from_vec(n, d, rows.iter().map(|&x| f64::from(x)).collect())?;
        TokenEmbeddingSequence::new(
            m,
            self.token_ids[..n].to_vec(),
            self.special_mask[..n].to_vec(),
            self.cls.iter().map(|&x| f64::from(x)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub d_model: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub producer: String,
    pub docs: Vec<DumpRecord>,
}

fn invalid(detail: String) -> FormatError {
    FormatError::Invalid { format: FORMAT, detail }
}

impl EmbeddingDump {
    /// Checks every record against the file-level header.
    pub fn validate(&self) -> std::result::Result<(), FormatError> {
        let mut seen = BTreeSet::new();
        for r in &self.docs {
            if !seen.insert(r.id.as_str()) {
                return Err(FormatError::DuplicateName {
                    format: FORMAT,
                    name: r.id.clone(),
                });
            }
            if r.len() > self.max_len {
                return Err(invalid(format!("`{}` has {} tokens, max_len is {}", r.id, r.len(), self.max_len)));
            }
            if let Some(t) = r.token_ids.iter().find(|&&t| t as usize >= self.vocab_size) {
                return Err(invalid(format!("`{}` has token {t} outside vocabulary {}", r.id, self.vocab_size)));
            }
            let sizes = [
                ("special_mask", r.special_mask.len(), r.len()),
                ("embeddings", r.embeddings.len(), r.len() * self.d_model),
                ("cls", r.cls.len(), self.d_model),
            ];
            for (what, found, declared) in sizes {
                if found != declared {
                    return Err(FormatError::SizeMismatch {
                        format: FORMAT,
                        what: format!("`{}` {what}", r.id),
                        declared: declared as u64,
                        found: found as u64,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> std::result::Result<Vec<u8>, FormatError> {
        self.validate()?;
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.d_model as u32);
        w.u32(self.vocab_size as u32);
        w.u32(self.max_len as u32);
        w.str(&self.producer);
        w.u64(self.docs.len() as u64);
        for r in &self.docs {
            w.str(&r.id);
            w.u32(r.len() as u32);
            for &t in &r.token_ids {
                w.u32(t);
            }
            w.bytes(&r.special_mask.iter().map(|&b| u8::from(b)).collect::<Vec<_>>());
            w.f32s(&r.embeddings);
            w.f32s(&r.cls);
        }
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader::open(FORMAT, buf, MAGIC, VERSION)?;
        let d_model = r.u32()? as usize;
        let vocab_size = r.u32()? as usize;
        let max_len = r.u32()? as usize;
        let producer = r.str("producer tag")?;
        let count = r.u64()?;
        let mut docs = Vec::new();
        for _ in 0..count {
            let id = r.str("document id")?;
            let len = r.u32()? as usize;
            if len > max_len {
                return Err(invalid(format!("`{id}` has {len} tokens, max_len is {max_len}")));
            }
            let token_ids = (0..len).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
            let special_mask = r
                .take(len)?
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(invalid(format!("`{id}` has special-mask byte {b}"))),
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let embeddings = r.f32s((len * d_model) as u64)?;
            let cls = r.f32s(d_model as u64)?;
            docs.push(DumpRecord {
                id,
                token_ids,
                special_mask,
                embeddings,
                cls,
            });
        }
        r.finish()?;
        let dump = Self {
            d_model,
            vocab_size,
            max_len,
            producer,
            docs,
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?).map_err(|e| Error::format(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes().map_err(|e| Error::format(path, e))?;
        write_file(path, &bytes)
    }
}
