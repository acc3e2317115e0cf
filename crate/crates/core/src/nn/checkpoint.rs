//! Binary checkpoint container.
//!
//! ```text
//! "MOCA"            4 bytes magic
//! version           u32 LE (= 1)
//! entry count       u32 LE
//! entries, each:
//!   name length     u16 LE
//!   name            UTF-8
//!   rank            u8
//!   dims            rank × u64 LE
//!   payload         product(dims) × f64 LE, row-major
//! crc32             u32 LE, IEEE CRC-32 of every entry byte
//! ```
//!
//! Non-numeric metadata (e.g. a JSON config) is stored as a rank-1 entry whose
//! values are the UTF-8 bytes, one byte per `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MOCA";
pub const VERSION: u32 = 1;

/// Ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::contract("entry name longer than 65535 bytes"));
        }
        if self.get(&name).is_some() {
            return Err(Error::contract(format!("duplicate checkpoint entry {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn push_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) -> Result<()> {
        let data: Vec<f64> = bytes.iter().map(|&b| b as f64).collect();
        let t = if data.is_empty() {
            Tensor::vector(vec![-1.0])?
        } else {
            Tensor::vector(data)?
        };
        self.push(name, t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::format(0, format!("checkpoint has no entry {name}")))
    }

    pub fn get_bytes(&self, name: &str) -> Result<Vec<u8>> {
        let t = self.require(name)?;
        if t.data() == [-1.0] {
            return Ok(Vec::new());
        }
        t.data()
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::format(0, format!("entry {name} is not a byte string")))
                }
            })
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        let body_start = out.len();
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[body_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:?}")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = r.u32("entry count")?;
        let body_start = r.pos;
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let at = r.pos as u64;
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::format(at, "entry name is not UTF-8"))?
                .to_string();
            let rank = r.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("dimension")? as usize);
            }
            let n: usize = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(
                || Error::format(at, "dimension product overflows"),
            )?;
            let nbytes = n
                .checked_mul(8)
                .ok_or_else(|| Error::format(at, "payload size overflows"))?;
            let payload = r.take(nbytes, "payload")?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::format(at, e.to_string()))?;
            ckpt.push(name, t).map_err(|e| Error::format(at, e.to_string()))?;
        }
        let body_end = r.pos;
        let stored = r.u32("crc32")?;
        let actual = crc32fast::hash(&bytes[body_start..body_end]);
        if stored != actual {
            return Err(Error::format(
                body_end as u64,
                format!("crc mismatch: stored {stored:08x}, computed {actual:08x}"),
            ));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after checksum"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            )),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
