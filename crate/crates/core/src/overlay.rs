//! Side-by-side visualization: original | ground-truth mask | original with
//! the predicted mask tinted red.

use std::path::Path;

use image::{GrayImage, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::BinaryMask;

pub const TINT: [u8; 3] = [255, 0, 0];
pub const TINT_ALPHA: f64 = 0.45;

fn blend(g: u8, tint: u8) -> u8 {
    ((1.0 - TINT_ALPHA) * f64::from(g) + TINT_ALPHA * f64::from(tint)).round() as u8
}

/// Builds the three-panel image. Every pixel of the overlay panel under
/// `pred` differs from the original; all others are copied unchanged.
pub fn overlay_panel(image: &GrayImage, gt: &BinaryMask, pred: &BinaryMask) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    let dims = (h as usize, w as usize);
    if gt.dims() != dims || pred.dims() != dims {
        return Err(Error::shape(format!("image is {dims:?}, masks are {:?} and {:?}", gt.dims(), pred.dims())));
    }
    let mut out = RgbImage::new(3 * w, h);
    for y in 0..h {
        for x in 0..w {
            let g = image.get_pixel(x, y)[0];
            out.put_pixel(x, y, Rgb([g, g, g]));
            let m = if gt.get(y as usize, x as usize) { 255 } else { 0 };
            out.put_pixel(w + x, y, Rgb([m, m, m]));
            let o = if pred.get(y as usize, x as usize) { Rgb(TINT.map(|t| blend(g, t))) } else { Rgb([g, g, g]) };
            out.put_pixel(2 * w + x, y, o);
        }
    }
    Ok(out)
}

pub fn render_overlay(image: &GrayImage, gt: &BinaryMask, pred: &BinaryMask, out: &Path) -> Result<()> {
    let panel = overlay_panel(image, gt, pred)?;
    panel.save(out).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(out, io),
        other => Error::Layout(format!("cannot write {}: {other}", out.display())),
    })
}

/// Pixels of the overlay panel that differ from the original panel.
pub fn tinted_pixels(panel: &RgbImage) -> usize {
    let w = panel.width() / 3;
    let mut n = 0;
    for y in 0..panel.height() {
        for x in 0..w {
            if panel.get_pixel(x, y) != panel.get_pixel(2 * w + x, y) {
                n += 1;
            }
        }
    }
    n
}
