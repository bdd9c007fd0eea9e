//! On-disk formats.
//!
//! `CROFEMB1` embedding file (all integers little-endian):
//!
//! ```text
//! 0..8    ASCII magic "CROFEMB1"
//! 8..12   u32 row count
//! 12..16  u32 dim count
//! 16      flags, bit 0 = rows are unit-norm
//! 17..    rows * dims IEEE-754 f32, row-major
//! ```
//!
//! Label files hold one decimal class index per line; class-name files hold one
//! UTF-8 name per line, line `i` naming class `i`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::matrix::EmbeddingMatrix;
use crate::error::{CrofError, Result};

pub const MAGIC: &[u8; 8] = b"CROFEMB1";
pub const HEADER_LEN: usize = 17;
const FLAG_NORMALIZED: u8 = 0b1;

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows())
        .map_err(|_| CrofError::Shape(format!("{} rows exceed u32", m.rows())))?;
    let dims = u32::try_from(m.dims())
        .map_err(|_| CrofError::Shape(format!("{} dims exceed u32", m.dims())))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + m.data().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&dims.to_le_bytes());
    buf.push(if m.is_normalized() { FLAG_NORMALIZED } else { 0 });
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(CrofError::Length(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(CrofError::Format(format!(
            "bad magic {:?}, expected \"CROFEMB1\"",
            String::from_utf8_lossy(&bytes[..8])
        )));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let flags = bytes[16];
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| CrofError::Length(format!("{rows}x{dims} overflows")))?;
    if payload.len() != expected {
        return Err(CrofError::Length(format!(
            "header declares {rows}x{dims} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(rows, dims, data, flags & FLAG_NORMALIZED != 0)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(m)?;
    fs::write(path, bytes).map_err(|e| CrofError::storage(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CrofError::storage(path, e))?;
    decode_embeddings(&bytes)
}

pub fn save_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CrofError::storage(path, e))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CrofError::storage(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                CrofError::Format(format!(
                    "{}:{}: `{}` is not a class index",
                    path.display(),
                    i + 1,
                    l.trim()
                ))
            })
        })
        .collect()
}

pub fn save_class_names(names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| CrofError::storage(path, e))?;
    for n in names {
        writeln!(f, "{n}").map_err(|e| CrofError::storage(path, e))?;
    }
    Ok(())
}

pub fn load_class_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CrofError::storage(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}
