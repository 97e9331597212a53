//! Little-endian primitives shared by the binary formats.

use crate::error::FormatError;

pub(crate) struct Writer(pub Vec<u8>);

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    pub fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }

    /// u32 length prefix, then UTF-8 bytes.
    pub fn str(&mut self, s: &str) {
        self.u32(u32::try_from(s.len()).expect("string longer than 4 GiB"));
        self.bytes(s.as_bytes());
    }

    pub fn f32s(&mut self, xs: &[f32]) {
        self.0.reserve(xs.len() * 4);
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    format: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version; returns the reader positioned after them.
    pub fn open(format: &'static str, buf: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self, FormatError> {
        let mut r = Reader { format, buf, pos: 0 };
        let found: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if &found != magic {
            return Err(FormatError::BadMagic { format, found });
        }
        let v = r.u32()?;
        if v != version {
            return Err(FormatError::UnsupportedVersion { format, version: v });
        }
        Ok(r)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(FormatError::Truncated {
            format: self.format,
            offset: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn str(&mut self, what: &'static str) -> Result<String, FormatError> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| FormatError::InvalidUtf8 {
            format: self.format,
            what,
        })
    }

    /// Reads `n` floats, refusing counts the remaining input cannot hold
    /// before allocating.
    pub fn f32s(&mut self, n: u64) -> Result<Vec<f32>, FormatError> {
        let bytes = n.checked_mul(4).and_then(|b| usize::try_from(b).ok()).ok_or(FormatError::Truncated {
            format: self.format,
            offset: self.buf.len(),
        })?;
        let b = self.take(bytes)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    /// Errors if anything follows the declared payload.
    pub fn finish(self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::SizeMismatch {
                format: self.format,
                what: "bytes after declared payload".into(),
                declared: 0,
                found: self.remaining() as u64,
            });
        }
        Ok(())
    }
}
