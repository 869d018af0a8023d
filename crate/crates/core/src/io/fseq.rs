//! `FSEQ` feature files.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | 4         | magic `FSEQ`                   |
//! | 4      | 4         | version (u32, 1)               |
//! | 8      | 4         | frame count `T` (u32)          |
//! | 12     | 4         | feature dim `D` (u32)          |
//! | 16     | `4·T·D`   | f32 values, row-major          |

use std::path::Path;

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 4] = b"FSEQ";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode_features(features: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + features.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated header"))
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected FSEQ"));
    }
    let version = u32_at(bytes, 4)?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let t = u32_at(bytes, 8)? as usize;
    let d = u32_at(bytes, 12)? as usize;
    if t == 0 || d == 0 {
        return Err(Error::format(8, format!("empty feature matrix {t}x{d}")));
    }
    let expected = HEADER + t * d * 4;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {t}x{d} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(expected as u64, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(t * d);
    for (i, chunk) in bytes[HEADER..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(Error::format((HEADER + i * 4) as u64, "non-finite feature value"));
        }
        data.push(v);
    }
    Matrix::from_vec(t, d, data)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix> {
    decode_features(&read_file(path.as_ref())?)
}

pub fn write_features(path: impl AsRef<Path>, features: &Matrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_features(features))
}
