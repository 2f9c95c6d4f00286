//! Codec-free binary file formats and frame-directory ingestion.
//!
//! Three little-endian container formats, each with a 4-byte magic and a
//! u16 version:
//!
//! - `SFST` — frame stacks (header + pixel data, frame-major, row-major,
//!   channel-interleaved; integer depths store quantized codes, depth 32
//!   stores raw f32),
//! - `SFLU` — diffusion lookup tables (fx, refractive index, grids, then
//!   (rd_dc, rd_ac) pairs row-major by the mu_a index),
//! - `SFPM` — property maps (two f32 planes, a u8 mask plane, and a JSON
//!   provenance footer).
//!
//! Every emitted file re-ingests to an equal in-memory value, and writing
//! that value again reproduces the bytes exactly.

pub mod pgm;
pub mod sflu;
pub mod sfpm;
pub mod sfst;

use crate::error::{Error, Result};

pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos as u64, message: message.into() }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse {
                offset: self.data.len() as u64,
                message: format!(
                    "truncated payload: needed {n} bytes for {what} at offset {}, {} available",
                    self.pos,
                    self.data.len() - self.pos
                ),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::Parse {
                offset: 0,
                message: format!(
                    "bad magic: expected {:?}, got {:?}",
                    String::from_utf8_lossy(expected),
                    String::from_utf8_lossy(got)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.data[self.pos..];
        self.pos = self.data.len();
        s
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("{} trailing bytes after payload", self.remaining()),
            });
        }
        Ok(())
    }
}
