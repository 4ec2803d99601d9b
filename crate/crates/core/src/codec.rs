//! Little-endian writer/reader shared by the template and volume caches.
//!
//! Layout of every cache file: 4 magic bytes, `u32` version, `u64` total file
//! length, payload, then a CRC-32 of everything before it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u32(version);
        w.buf.extend_from_slice(&0u64.to_le_bytes());
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(mut self) -> Vec<u8> {
        let total = (self.buf.len() + 4) as u64;
        self.buf[8..16].copy_from_slice(&total.to_le_bytes());
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic, version and checksum, leaving the cursor on the payload.
    pub fn open(data: &'a [u8], magic: &[u8; 4], version: u32) -> Result<Self> {
        if data.len() < 8 {
            return Err(Error::Truncated);
        }
        if &data[..4] != magic {
            return Err(Error::BadMagic);
        }
        let found = u32::from_le_bytes([data[4], data[5], data[6], data[7]]);
        if found != version {
            return Err(Error::VersionMismatch {
                found,
                expected: version,
            });
        }
        if data.len() < 20 {
            return Err(Error::Truncated);
        }
        let total = u64::from_le_bytes(data[8..16].try_into().expect("8 bytes"));
        if total != data.len() as u64 {
            return Err(Error::Truncated);
        }
        let (body, tail) = data.split_at(data.len() - 4);
        let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
        if crc32fast::hash(body) != stored {
            return Err(Error::Checksum);
        }
        Ok(Self { data: body, pos: 16 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        if end > self.data.len() {
            return Err(Error::Truncated);
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Truncated)
    }

    /// Refuses counts that could not possibly fit in the remaining bytes.
    pub fn count(&mut self, min_item_bytes: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_bytes) > self.data.len() - self.pos {
            return Err(Error::Truncated);
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Truncated);
        }
        Ok(())
    }
}
