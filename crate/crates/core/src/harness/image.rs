//! Sample grids as binary portable graymaps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gray level of a signal `v` (volts): `(v / v_scale + 1) · 127.5`,
/// rounded half up and clamped to `0..=255`.
pub fn to_pixel(v: f64, v_scale: f64) -> u8 {
    let p = ((v / v_scale + 1.0) * 127.5 + 0.5).floor();
    if p.is_nan() {
        return 0;
    }
    p.clamp(0.0, 255.0) as u8
}

/// Tiles `images` (all `[h, w, 1]`) row by row, `cols` per row, into one
/// P5 graymap. Unused tiles in the last row are black.
pub fn grid_pgm(images: &[Tensor], cols: usize, v_scale: f64) -> Result<Vec<u8>> {
    let first = images.first().ok_or(Error::EmptySet)?;
    let (h, w) = match *first.shape() {
        [h, w, 1] => (h, w),
        _ => return Err(Error::Shape(format!("grid needs [h, w, 1] images, got {:?}", first.shape()))),
    };
    if let Some(bad) = images.iter().find(|t| t.shape() != first.shape()) {
        return Err(Error::Shape(format!("mixed image shapes {:?} and {:?}", first.shape(), bad.shape())));
    }
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (gw, gh) = (cols * w, rows * h);
    let mut px = vec![0u8; gw * gh];
    for (k, img) in images.iter().enumerate() {
        let (ty, tx) = (k / cols, k % cols);
        for y in 0..h {
            let dst = (ty * h + y) * gw + tx * w;
            for x in 0..w {
                px[dst + x] = to_pixel(img.data()[y * w + x], v_scale);
            }
        }
    }
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    out.extend(px);
    Ok(out)
}

pub fn write_grid(path: &Path, images: &[Tensor], cols: usize, v_scale: f64) -> Result<()> {
    let bytes = grid_pgm(images, cols, v_scale)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_mapping() {
        assert_eq!(to_pixel(-0.9, 0.9), 0);
        assert_eq!(to_pixel(0.9, 0.9), 255);
        assert_eq!(to_pixel(0.0, 0.9), 128);
        assert_eq!(to_pixel(5.0, 0.9), 255);
        assert_eq!(to_pixel(-5.0, 0.9), 0);
        // 127.5 · (1 + 1/255) = 128.0 exactly: no rounding.
        assert_eq!(to_pixel(1.0 / 255.0, 1.0), 128);
    }

    #[test]
    fn grid_layout() {
        let a = Tensor::filled(vec![2, 2, 1], -1.0);
        let b = Tensor::filled(vec![2, 2, 1], 1.0);
        let g = grid_pgm(&[a.clone(), b, a], 2, 1.0).unwrap();
        let header = b"P5\n4 4\n255\n";
        assert_eq!(&g[..header.len()], header);
        let px = &g[header.len()..];
        assert_eq!(px, &[0, 0, 255, 255, 0, 0, 255, 255, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(grid_pgm(&[], 2, 1.0).is_err());
    }
}
