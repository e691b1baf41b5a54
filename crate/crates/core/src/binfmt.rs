//! Versioned flat binary layout shared by every fitted model.
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"GAITFUSE"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      4     model kind tag, u32 little-endian (see `ModelKind`)
//! 16      ...   body: a kind-specific sequence of
//!               u64 little-endian counts and
//!               f64 little-endian arrays (each preceded by its u64 length)
//! ```
//!
//! There is no padding and no trailing checksum; readers reject trailing bytes.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GAITFUSE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum ModelKind {
    Gmm = 1,
    Lda = 2,
    CorrMnn = 3,
    Hmm = 4,
    NormStats = 5,
}

impl ModelKind {
    fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            1 => ModelKind::Gmm,
            2 => ModelKind::Lda,
            3 => ModelKind::CorrMnn,
            4 => ModelKind::Hmm,
            5 => ModelKind::NormStats,
            _ => return None,
        })
    }
}

pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(kind: ModelKind) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(kind as u32).to_le_bytes());
        Self { buf }
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.buf.extend_from_slice(&(n as u64).to_le_bytes());
        self
    }

    pub fn real(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn reals(&mut self, vs: &[f64]) -> &mut Self {
        self.count(vs.len());
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], expected: ModelKind) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Model("missing magic tag".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Model(format!("unsupported format version {version}")));
        }
        let tag = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
        match ModelKind::from_tag(tag) {
            Some(k) if k == expected => {}
            Some(k) => {
                return Err(Error::Model(format!("expected {expected:?} model, found {k:?}")));
            }
            None => return Err(Error::Model(format!("unknown model kind tag {tag}"))),
        }
        Ok(Self { bytes, pos: 16 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Model("truncated model file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn count(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let n = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(n).map_err(|_| Error::Model(format!("count {n} too large")))
    }

    pub fn real(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn reals(&mut self) -> Result<Vec<f64>> {
        let n = self.count()?;
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::Model("truncated model file".into()));
        }
        (0..n).map(|_| self.real()).collect()
    }

    /// Reads a length-prefixed array and checks its length.
    pub fn reals_exact(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let v = self.reals()?;
        if v.len() != expected {
            return Err(Error::Model(format!(
                "{what}: expected {expected} values, found {}",
                v.len()
            )));
        }
        Ok(v)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Model(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
