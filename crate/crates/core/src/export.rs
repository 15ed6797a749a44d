//! Raster image export of classification overlays.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::error::{Error, Result};

pub const STRONG_COLOR: [u8; 3] = [255, 214, 0];
pub const WEAK_COLOR: [u8; 3] = [128, 40, 170];

/// Grayscale base image with affected pixels painted on top: `strong` where
/// the amplitude exceeds `strong_threshold`, `weak` elsewhere in the mask.
pub fn render_overlay(
    base: &Array2<f64>,
    amplitude: &Array2<f64>,
    mask: &Array2<bool>,
    strong_threshold: f64,
) -> Result<RgbImage> {
    if base.dim() != amplitude.dim() || base.dim() != mask.dim() {
        return Err(Error::DimensionMismatch("overlay inputs differ in size".into()));
    }
    let (rows, cols) = base.dim();
    let lo = base.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(cols as u32, rows as u32);
    for ((r, c), &b) in base.indexed_iter() {
        let px = if mask[[r, c]] {
            if amplitude[[r, c]] > strong_threshold {
                STRONG_COLOR
            } else {
                WEAK_COLOR
            }
        } else {
            let g = (40.0 + 180.0 * (b - lo) / span).round() as u8;
            [g, g, g]
        };
        img.put_pixel(c as u32, r as u32, Rgb(px));
    }
    Ok(img)
}

pub fn write_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_follow_thresholds() {
        let base = Array2::from_shape_fn((2, 2), |(r, c)| (r * 2 + c) as f64);
        let amp = Array2::from_shape_vec((2, 2), vec![0.0, 5.0, 10.0, 0.0]).unwrap();
        let mask = amp.mapv(|a| a > 1.0);
        let img = render_overlay(&base, &amp, &mask, 8.0).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [40, 40, 40]);
        assert_eq!(img.get_pixel(1, 0).0, WEAK_COLOR);
        assert_eq!(img.get_pixel(0, 1).0, STRONG_COLOR);
        assert_eq!(img.get_pixel(1, 1).0, [220, 220, 220]);
    }

    #[test]
    fn png_bytes_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let base = Array2::from_shape_fn((8, 12), |(r, c)| (r * c) as f64);
        let mask = Array2::from_elem((8, 12), false);
        let img = render_overlay(&base, &base, &mask, 1.0).unwrap();
        write_png(dir.path().join("a.png"), &img).unwrap();
        write_png(dir.path().join("b.png"), &img).unwrap();
        let a = std::fs::read(dir.path().join("a.png")).unwrap();
        let b = std::fs::read(dir.path().join("b.png")).unwrap();
        assert_eq!(a, b);
        let back = image::open(dir.path().join("a.png")).unwrap().to_rgb8();
        assert_eq!(back, img);
    }
}
