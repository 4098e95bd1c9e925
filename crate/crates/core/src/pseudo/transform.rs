//! Geometric transform chains: crop, resize, horizontal flip, rotation.
//!
//! Output pixel `(x, y)` is traced back through rotation, flip and resize to
//! a location in the crop window. Masks and index grids use nearest-neighbour
//! lookups along this path; images use bilinear sampling at the same location.
//! Right-angle rotations are clockwise and exact: 90 degrees maps a `W x H`
//! grid to `H x W` with `out(x, y) = in(y, H - 1 - x)`. Other angles rotate
//! about the raster centre keeping the raster size; samples falling outside
//! read as unset (masks) or black (images).

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::model::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Recorded parameters of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformChain {
    pub source: (u32, u32),
    pub crop: CropRect,
    pub resize: (u32, u32),
    pub hflip: bool,
    pub rotation_degrees: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rotation {
    R0,
    R90,
    R180,
    R270,
    Free { cos: f64, sin: f64 },
}

impl TransformChain {
    pub fn identity(width: u32, height: u32) -> Self {
        Self {
            source: (width, height),
            crop: CropRect {
                x: 0,
                y: 0,
                width,
                height,
            },
            resize: (width, height),
            hflip: false,
            rotation_degrees: 0.0,
        }
    }

    fn rotation(&self) -> Rotation {
        let d = self.rotation_degrees.rem_euclid(360.0);
        if d == 0.0 {
            Rotation::R0
        } else if d == 90.0 {
            Rotation::R90
        } else if d == 180.0 {
            Rotation::R180
        } else if d == 270.0 {
            Rotation::R270
        } else {
            let r = d.to_radians();
            Rotation::Free { cos: r.cos(), sin: r.sin() }
        }
    }

    pub fn output_size(&self) -> (u32, u32) {
        let (w, h) = self.resize;
        match self.rotation() {
            Rotation::R90 | Rotation::R270 => (h, w),
            _ => (w, h),
        }
    }

    /// Continuous pixel-centre coordinates in the resized (pre-flip) frame.
    fn to_resized(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        let (rw, rh) = self.resize;
        let (ow, oh) = self.output_size();
        let (fx, fy) = match self.rotation() {
            Rotation::R0 => (x as f64, y as f64),
            Rotation::R90 => (y as f64, (rh - 1 - x) as f64),
            Rotation::R180 => ((rw - 1 - x) as f64, (rh - 1 - y) as f64),
            Rotation::R270 => ((rw - 1 - y) as f64, x as f64),
            Rotation::Free { cos, sin } => {
                // clockwise by theta in image coordinates (y down); invert it
                let (cx, cy) = ((ow as f64 - 1.0) / 2.0, (oh as f64 - 1.0) / 2.0);
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let sx = cos * dx + sin * dy + cx;
                let sy = -sin * dx + cos * dy + cy;
                if sx < -0.5 || sy < -0.5 || sx >= rw as f64 - 0.5 || sy >= rh as f64 - 0.5 {
                    return None;
                }
                (sx, sy)
            }
        };
        let fx = if self.hflip { rw as f64 - 1.0 - fx } else { fx };
        Some((fx, fy))
    }

    /// Source pixel read by output pixel `(x, y)` under nearest-neighbour sampling.
    pub fn source_pixel(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        let (fx, fy) = self.to_resized(x, y)?;
        let (rw, rh) = self.resize;
        let (ix, iy) = (fx.round().clamp(0.0, rw as f64 - 1.0), fy.round().clamp(0.0, rh as f64 - 1.0));
        let c = self.crop;
        let sx = (((ix + 0.5) * c.width as f64 / rw as f64) as u32).min(c.width - 1);
        let sy = (((iy + 0.5) * c.height as f64 / rh as f64) as u32).min(c.height - 1);
        Some((c.x + sx, c.y + sy))
    }

    /// Continuous source location for bilinear sampling.
    fn source_point(&self, x: u32, y: u32) -> Option<(f64, f64)> {
        let (fx, fy) = self.to_resized(x, y)?;
        let (rw, rh) = self.resize;
        let c = self.crop;
        let sx = (fx + 0.5) * c.width as f64 / rw as f64 - 0.5;
        let sy = (fy + 0.5) * c.height as f64 / rh as f64 - 0.5;
        Some((
            c.x as f64 + sx.clamp(0.0, c.width as f64 - 1.0),
            c.y as f64 + sy.clamp(0.0, c.height as f64 - 1.0),
        ))
    }

    /// Nearest-neighbour transform of any grid stored row-major.
    pub fn apply_grid<T: Copy>(&self, src: &[T], fill: T) -> Vec<T> {
        let (sw, _) = self.source;
        let (ow, oh) = self.output_size();
        let mut out = Vec::with_capacity((ow * oh) as usize);
        for y in 0..oh {
            for x in 0..ow {
                out.push(match self.source_pixel(x, y) {
                    Some((sx, sy)) => src[(sy * sw + sx) as usize],
                    None => fill,
                });
            }
        }
        out
    }

    pub fn apply_mask(&self, mask: &Mask) -> Mask {
        assert_eq!(mask.dimensions(), self.source);
        let (ow, oh) = self.output_size();
        Mask::from_bits(ow, oh, self.apply_grid(mask.bits(), false))
    }

    pub fn apply_image(&self, img: &RgbImage) -> RgbImage {
        assert_eq!(img.dimensions(), self.source);
        let (ow, oh) = self.output_size();
        RgbImage::from_fn(ow, oh, |x, y| match self.source_point(x, y) {
            Some((sx, sy)) => bilinear(img, sx, sy),
            None => Rgb([0, 0, 0]),
        })
    }
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let p = |xx, yy| img.get_pixel(xx, yy).0;
    let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
        let bot = c[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
        out[k] = (top * (1.0 - ty) + bot * ty).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}
