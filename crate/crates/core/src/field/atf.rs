//! `ATF1` binary field files.
//!
//! Layout: magic `ATF1`, height `u32` LE, width `u32` LE, then row-major
//! cells, each `dx` then `dy` as `f32` LE.

use std::path::Path;

use super::CoarseField;
use crate::error::{Error, Result};

pub const ATF_MAGIC: &[u8; 4] = b"ATF1";
const HEADER_LEN: usize = 12;

pub fn encode_field(field: &CoarseField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + field.data().len() * 4);
    out.extend_from_slice(ATF_MAGIC);
    out.extend_from_slice(&(field.height() as u32).to_le_bytes());
    out.extend_from_slice(&(field.width() as u32).to_le_bytes());
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<CoarseField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: expected {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != ATF_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"ATF1\"",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if height < 2 || width < 2 {
        return Err(Error::Format(format!(
            "field header declares {height}x{width}, minimum is 2x2"
        )));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("field header dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload length mismatch: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "non-finite value at cell {}, component {}",
            k / 2,
            k % 2
        )));
    }
    CoarseField::from_vec(height, width, data)
}

pub fn save_field(field: &CoarseField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_field(field)).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<CoarseField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes)
}
