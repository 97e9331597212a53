//! Named f32 tensor container ("AGGT").
//!
//! ```text
//! "AGGT" | u32 version=1 | u32 count
//! count × { u32 name_len | name (UTF-8) | u32 rank | rank × u64 dim | f32 data, row-major }
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use aggretriever_core::linalg::Matrix;

use super::binio::{Reader, Writer};
use crate::error::{read_file, write_file, Error, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"AGGT";
pub const VERSION: u32 = 1;
const FORMAT: &str = "tensor container";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

fn element_count(dims: &[u64]) -> Option<u64> {
    dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
}

impl Tensor {
    pub fn new(name: impl Into<String>, dims: Vec<u64>, data: Vec<f32>) -> std::result::Result<Self, FormatError> {
        let name = name.into();
        let declared = element_count(&dims).ok_or_else(|| FormatError::Invalid {
            format: FORMAT,
            detail: format!("tensor `{name}` dimensions overflow"),
        })?;
        if declared != data.len() as u64 {
            return Err(FormatError::SizeMismatch {
                format: FORMAT,
                what: format!("tensor `{name}` element count"),
                declared,
                found: data.len() as u64,
            });
        }
        Ok(Self { name, dims, data })
    }

    pub fn from_matrix(name: impl Into<String>, m: &Matrix) -> Self {
        let data = m.as_slice().iter().map(|&x| x as f32).collect();
        Self::new(name, vec![m.rows() as u64, m.cols() as u64], data).expect("matrix shape matches data")
    }

    pub fn from_vector(name: impl Into<String>, v: &[f64]) -> Self {
        Self::new(name, vec![v.len() as u64], v.iter().map(|&x| x as f32).collect()).expect("vector shape")
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| f64::from(x)).collect()
    }

    fn shape_error(&self, expected: String) -> FormatError {
        FormatError::BadShape {
            name: self.name.clone(),
            expected,
            found: self.dims.clone(),
        }
    }

    /// As a rank-2 matrix, optionally checking either dimension.
    pub fn to_matrix(&self, rows: Option<usize>, cols: Option<usize>) -> std::result::Result<Matrix, FormatError> {
        let want = || {
            let f = |d: Option<usize>| d.map_or("*".to_string(), |d| d.to_string());
            format!("[{} × {}]", f(rows), f(cols))
        };
        match self.dims[..] {
            [r, c] if rows.is_none_or(|x| x as u64 == r) && cols.is_none_or(|x| x as u64 == c) => {
                Ok(Matrix::from_vec(r as usize, c as usize, self.to_f64()).expect("checked element count"))
            }
            _ => Err(self.shape_error(want())),
        }
    }

    /// As a rank-1 vector, optionally checking its length.
    pub fn to_vector(&self, len: Option<usize>) -> std::result::Result<Vec<f64>, FormatError> {
        match self.dims[..] {
            [n] if len.is_none_or(|l| l as u64 == n) => Ok(self.to_f64()),
            _ => Err(self.shape_error(len.map_or("[*]".into(), |l| format!("[{l}]")))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorContainer {
    tensors: Vec<Tensor>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; names must be unique.
    pub fn push(&mut self, t: Tensor) -> std::result::Result<(), FormatError> {
        if self.get(&t.name).is_some() {
            return Err(FormatError::DuplicateName {
                format: FORMAT,
                name: t.name,
            });
        }
        self.tensors.push(t);
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> std::result::Result<&Tensor, FormatError> {
        self.get(name).ok_or_else(|| FormatError::MissingTensor(name.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.tensors.len() as u32);
        for t in &self.tensors {
            w.str(&t.name);
            w.u32(t.dims.len() as u32);
            for &d in &t.dims {
                w.u64(d);
            }
            w.f32s(&t.data);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader::open(FORMAT, buf, MAGIC, VERSION)?;
        let count = r.u32()?;
        let mut seen = BTreeSet::new();
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.str("tensor name")?;
            if !seen.insert(name.clone()) {
                return Err(FormatError::DuplicateName { format: FORMAT, name });
            }
            let rank = r.u32()?;
            let dims = (0..rank).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
            let n = element_count(&dims).ok_or_else(|| FormatError::Invalid {
                format: FORMAT,
                detail: format!("tensor `{name}` dimensions overflow"),
            })?;
            let data = r.f32s(n)?;
            tensors.push(Tensor { name, dims, data });
        }
        r.finish()?;
        Ok(Self { tensors })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?).map_err(|e| Error::format(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }
}
