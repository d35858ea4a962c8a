use crate::error::Result;

use super::shape::{ShapeKind, ShapeSpec, BACKGROUND};

/// An RGB image with f64 channels in `[0, 1]`, stored row-major as
/// `height x width x 3` (channels interleaved).
#[derive(Clone, Debug, PartialEq)]
pub struct PixelImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl PixelImage {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> PixelImage {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        PixelImage { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let off = (y * self.width + x) * 3;
        [self.data[off], self.data[off + 1], self.data[off + 2]]
    }

    fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let off = (y * self.width + x) * 3;
        self.data[off..off + 3].copy_from_slice(&rgb);
    }
}

/// Is the pixel at signed offset `(dx, dy)` from the center inside the
/// shape? Integer arithmetic only, so membership is exact and hard-edged.
fn contains(kind: ShapeKind, size: usize, dx: i64, dy: i64) -> bool {
    let s = size as i64;
    match kind {
        ShapeKind::Circle => dx * dx + dy * dy <= s * s,
        ShapeKind::Square => dx.abs() <= s && dy.abs() <= s,
        // Apex one half-extent above center, base one below; width grows
        // linearly from 1 pixel at the apex to the full base.
        ShapeKind::Triangle => dy >= -s && dy <= s && 2 * dx.abs() <= dy + s,
        ShapeKind::Cross => {
            let t = (s / 3).max(1);
            (dx.abs() <= t && dy.abs() <= s) || (dy.abs() <= t && dx.abs() <= s)
        }
    }
}

/// Deterministically rasterize a spec onto a fresh canvas: background
/// gray everywhere, the exact object color inside the shape predicate,
/// no anti-aliasing. Equal specs produce bit-identical images.
pub fn render_shape(spec: &ShapeSpec, width: usize, height: usize) -> Result<PixelImage> {
    spec.validate(width, height)?;
    let mut img = PixelImage::filled(width, height, BACKGROUND);
    let rgb = spec.color.rgb();
    let (cx, cy) = (spec.center.0 as i64, spec.center.1 as i64);
    // The predicate is false outside the bounding box, so scanning just
    // the box is an optimization, not a behavior change.
    let s = spec.size as i64;
    for y in (cy - s).max(0)..=(cy + s).min(height as i64 - 1) {
        for x in (cx - s).max(0)..=(cx + s).min(width as i64 - 1) {
            if contains(spec.shape, spec.size, x - cx, y - cy) {
                img.set(x as usize, y as usize, rgb);
            }
        }
    }
    Ok(img)
}
