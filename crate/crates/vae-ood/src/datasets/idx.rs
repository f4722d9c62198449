//! IDX file loader (MNIST family), plain or gzip-compressed.
//!
//! Format: 4 magic bytes `[0, 0, dtype, ndims]`, then `ndims` big-endian
//! u32 extents, then row-major payload. Only `u8` image files
//! (dtype 0x08, 3 dimensions) are accepted here.

use super::{ImageBatch, Split};
use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

pub fn load_idx(path: &Path) -> Result<ImageBatch> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|_| Error::format(path, "gzip stream is corrupt"))?;
        out
    } else {
        raw
    };

    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(path, "bad IDX magic"));
    }
    let (dtype, ndims) = (bytes[2], bytes[3] as usize);
    if dtype != 0x08 {
        return Err(Error::format(path, format!("unsupported IDX dtype 0x{dtype:02x}")));
    }
    if ndims != 3 {
        return Err(Error::format(path, format!("expected 3-d image file, got {ndims} dims")));
    }
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let dim = |i: usize| -> usize {
        u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
    };
    let (n, h, w) = (dim(0), dim(1), dim(2));
    let payload = &bytes[header..];
    if payload.len() != n * h * w {
        return Err(Error::format(
            path,
            format!("payload {} bytes, expected {}", payload.len(), n * h * w),
        ));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_string());
    ImageBatch::new(stem, Split::Train, n, 1, h, w, payload.to_vec())
}
