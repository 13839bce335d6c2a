//! Big-endian IDX image and label files.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.to_owned(),
            msg: format!("header needs {need} bytes, file has {}", bytes.len()),
        });
    }
    let word = |i: usize| u32::from_be_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]]);
    let found = word(0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_owned(),
            expected: magic,
            found,
        });
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn payload<'a>(path: &Path, bytes: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8]> {
    if bytes.len() < offset + len {
        return Err(Error::Truncated {
            path: path.to_owned(),
            msg: format!("expected {len} payload bytes, found {}", bytes.len() - offset),
        });
    }
    Ok(&bytes[offset..offset + len])
}

/// Returns `(count, rows, cols, pixels scaled to [0, 1])`.
pub fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    let d = header(path, bytes, IMAGE_MAGIC, 3)?;
    let (n, rows, cols) = (d[0], d[1], d[2]);
    let data = payload(path, bytes, 16, n * rows * cols)?;
    Ok((n, rows, cols, data.iter().map(|&b| b as f32 / 255.0).collect()))
}

pub fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let d = header(path, bytes, LABEL_MAGIC, 1)?;
    Ok(payload(path, bytes, 8, d[0])?.to_vec())
}

pub fn read_images(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    parse_images(path, &std::fs::read(path)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(path, &std::fs::read(path)?)
}
