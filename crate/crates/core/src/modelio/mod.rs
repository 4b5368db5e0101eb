//! File formats: the binary model and dataset containers and the TOML
//! configs (cost table, tuned hash lengths).
//!
//! All binary integers and floats are little-endian.
//!
//! Model file (`.dcam`):
//!
//! ```text
//! "DCAM" | version u16 = 1 | layer count u16 | input c, h, w: u32 x3
//! per layer: kind u8 | flags u8 | geometry u32... | f32 blobs...
//! ```
//!
//! | kind | layer     | geometry                                  | blobs                                  |
//! |------|-----------|-------------------------------------------|----------------------------------------|
//! | 0    | conv2d    | in_c, out_c, kh, kw, stride, pad          | weights `[out][in][kh][kw]`, bias `[out]` |
//! | 1    | linear    | in, out                                   | weights `[out][in]`, bias `[out]`      |
//! | 2    | relu      |                                           |                                        |
//! | 3    | maxpool   | kernel, stride                            |                                        |
//! | 4    | avgpool   | kernel, stride                            |                                        |
//! | 5    | batchnorm | channels                                  | gamma, beta, mean, var `[c]`, eps `[1]` |
//! | 6    | flatten   |                                           |                                        |
//!
//! Flags (conv2d and linear only; zero elsewhere): bit 0 bias present,
//! bit 1 ReLU fused after the bias. Other bits must be zero.
//!
//! Dataset file (`.dcds`):
//!
//! ```text
//! "DCDS" | version u16 = 1 | classes u16 | count u32 | c, h, w: u32 x3
//! samples: count x c x h x w f32 (CHW per sample) | labels: count x u16
//! ```
//!
//! Neither format allows trailing bytes, and every parsed float must be finite.

mod config;
mod dataset;
mod model;

use std::path::Path;

use thiserror::Error;

pub use config::{
    cost_table_from_toml, cost_table_to_toml, load_cost_table, load_tune_result, save_tune_result,
    tune_result_from_toml, tune_result_to_toml,
};
pub use dataset::{load_dataset, parse_dataset, serialize_dataset, Dataset};
pub use model::{load_model, parse_model, save_model, serialize_model};

pub const MODEL_MAGIC: [u8; 4] = *b"DCAM";
pub const DATASET_MAGIC: [u8; 4] = *b"DCDS";
pub const FORMAT_VERSION: u16 = 1;

/// Largest tensor (in elements) either format may describe.
pub const MAX_TENSOR_ELEMENTS: usize = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} at offset {offset} (expected {expected})")]
    UnsupportedVersion { offset: usize, found: u16, expected: u16 },

    #[error("truncated {what} at offset {offset}: need {needed} bytes, {available} left")]
    Truncated { offset: usize, what: &'static str, needed: usize, available: usize },

    #[error("unknown layer kind {tag} at offset {offset}")]
    UnknownKind { offset: usize, tag: u8 },

    #[error("invalid {what} at offset {offset}: {reason}")]
    Invalid { offset: usize, what: &'static str, reason: String },

    #[error("layer {layer} (record at offset {offset}): {reason}")]
    Shape { offset: usize, layer: usize, reason: String },

    #[error("{extra} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("{0}")]
    Syntax(String),
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if n > self.remaining() {
            return Err(FormatError::Truncated { offset: self.pos, what, needed: n, available: self.remaining() });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = &self.buf[..self.buf.len().min(4)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    pub(crate) fn version(&mut self) -> Result<(), FormatError> {
        let offset = self.pos;
        let found = self.u16("version")?;
        if found != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion { offset, found, expected: FORMAT_VERSION });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &'static str) -> Result<usize, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    /// `count` finite f32 values. The length is checked before allocating.
    pub(crate) fn f32s(&mut self, count: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        let offset = self.pos;
        let bytes = count.checked_mul(4).ok_or(FormatError::Invalid {
            offset,
            what,
            reason: format!("{count} values overflow"),
        })?;
        let raw = self.take(bytes, what)?;
        let mut out = Vec::with_capacity(count);
        for (i, b) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::Invalid {
                    offset: offset + 4 * i,
                    what,
                    reason: format!("non-finite value {v}"),
                });
            }
            out.push(v);
        }
        Ok(out)
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        if self.remaining() > 0 {
            return Err(FormatError::TrailingBytes { offset: self.pos, extra: self.remaining() });
        }
        Ok(())
    }
}

pub(crate) fn checked_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).filter(|&n| n <= MAX_TENSOR_ELEMENTS)
}

pub(crate) fn read_file(path: &Path) -> crate::Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| crate::Error::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    std::fs::write(path, bytes).map_err(|source| crate::Error::Io { path: path.to_path_buf(), source })
}

pub(crate) fn format_error(path: &Path, source: FormatError) -> crate::Error {
    crate::Error::Format { path: path.to_path_buf(), source }
}
