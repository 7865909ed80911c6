//! IDX-format dataset reader.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images scaled from bytes `0..=255` to `[−1, 1]`, shaped `[rows, cols, 1]`.
pub fn load_mnist(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_images(&bytes, path)
}

pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&bytes, path)
}

/// `byte / 127.5 − 1`.
pub fn pixel_to_unit(b: u8) -> f64 {
    f64::from(b) / 127.5 - 1.0
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(Error::TruncatedIdx {
            path: path.into(),
            detail: format!("{} bytes, no magic number", bytes.len()),
        });
    }
    let found = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    if found != magic {
        return Err(Error::BadIdxMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < need {
        return Err(Error::TruncatedIdx {
            path: path.into(),
            detail: format!("header needs {need} bytes, file has {}", bytes.len()),
        });
    }
    Ok((0..dims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize)
        .collect())
}

fn body<'a>(bytes: &'a [u8], path: &Path, offset: usize, len: usize) -> Result<&'a [u8]> {
    match (bytes.len() - offset).cmp(&len) {
        std::cmp::Ordering::Less => Err(Error::TruncatedIdx {
            path: path.into(),
            detail: format!("header promises {len} data bytes, file has {}", bytes.len() - offset),
        }),
        std::cmp::Ordering::Greater => Err(Error::IdxDimensionMismatch {
            path: path.into(),
            detail: format!(
                "header promises {len} data bytes, file has {} trailing",
                bytes.len() - offset
            ),
        }),
        std::cmp::Ordering::Equal => Ok(&bytes[offset..]),
    }
}

pub fn parse_images(bytes: &[u8], path: &Path) -> Result<Vec<Tensor>> {
    let dims = header(bytes, path, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(Error::IdxDimensionMismatch {
            path: path.into(),
            detail: format!("image size {rows}x{cols}"),
        });
    }
    let px = rows * cols;
    let data = body(bytes, path, 16, n * px)?;
    Ok(data
        .chunks_exact(px)
        .map(|img| Tensor::from_parts(vec![rows, cols, 1], img.iter().map(|&b| pixel_to_unit(b)).collect()))
        .collect())
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let dims = header(bytes, path, LABELS_MAGIC, 1)?;
    Ok(body(bytes, path, 8, dims[0])?.to_vec())
}
