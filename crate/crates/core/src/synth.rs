//! Procedural scenes: flat-shaded geometric objects on textured backgrounds.
//! Shared by the synthetic video corpus and the pseudo-video pre-training corpus.

use image::{Rgb, RgbImage};
use rand::Rng;

use crate::model::Mask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeKind {
    Rect,
    Ellipse,
    Triangle,
    Diamond,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub color: [u8; 3],
}

impl Shape {
    /// Point-in-shape test at pixel centre `(x + 0.5, y + 0.5)`.
    pub fn covers(&self, x: u32, y: u32) -> bool {
        let dx = (x as f64 + 0.5 - self.cx) / self.rx;
        let dy = (y as f64 + 0.5 - self.cy) / self.ry;
        match self.kind {
            ShapeKind::Rect => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            ShapeKind::Ellipse => dx * dx + dy * dy <= 1.0,
            ShapeKind::Diamond => dx.abs() + dy.abs() <= 1.0,
            // apex up, base at dy = 1
            ShapeKind::Triangle => (-1.0..=1.0).contains(&dy) && dx.abs() <= (dy + 1.0) / 2.0,
        }
    }
}

pub fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// `n` object colors with hues spread evenly from a random start.
pub fn spread_colors<R: Rng>(rng: &mut R, n: usize) -> Vec<[u8; 3]> {
    let start = rng.random_range(0.0..360.0);
    (0..n)
        .map(|i| {
            let h = start + i as f64 * 360.0 / n as f64 + rng.random_range(-6.0..6.0);
            hsv(h, rng.random_range(0.65..1.0), rng.random_range(0.6..1.0))
        })
        .collect()
}

pub fn random_kind<R: Rng>(rng: &mut R) -> ShapeKind {
    match rng.random_range(0..4) {
        0 => ShapeKind::Rect,
        1 => ShapeKind::Ellipse,
        2 => ShapeKind::Triangle,
        _ => ShapeKind::Diamond,
    }
}

/// Low-saturation background: a smooth gradient plus per-pixel noise.
pub fn textured_background<R: Rng>(rng: &mut R, width: u32, height: u32) -> RgbImage {
    let base: [f64; 3] = [rng.random_range(70.0..150.0); 3].map(|b| b + rng.random_range(-12.0..12.0));
    let gx = rng.random_range(-30.0..30.0);
    let gy = rng.random_range(-30.0..30.0);
    RgbImage::from_fn(width, height, |x, y| {
        let t = gx * x as f64 / width as f64 + gy * y as f64 / height as f64;
        let noise: f64 = rng.random_range(-10.0..10.0);
        Rgb(base.map(|b| (b + t + noise).round().clamp(0.0, 255.0) as u8))
    })
}

/// Paint shapes in order (later ones occlude earlier ones) with a light
/// vertical shading, and return the visible mask of each shape.
pub fn paint_scene(background: &RgbImage, shapes: &[Shape]) -> (RgbImage, Vec<Mask>) {
    let (w, h) = background.dimensions();
    let mut img = background.clone();
    let mut masks: Vec<Mask> = Vec::with_capacity(shapes.len());
    for s in shapes {
        let m = Mask::from_fn(w, h, |x, y| s.covers(x, y));
        for prev in masks.iter_mut() {
            prev.subtract(&m);
        }
        for (x, y) in m.iter_set() {
            let shade = 1.0 + 0.15 * ((y as f64 + 0.5 - s.cy) / s.ry).clamp(-1.0, 1.0);
            img.put_pixel(x, y, Rgb(s.color.map(|c| (c as f64 * shade).round().clamp(0.0, 255.0) as u8)));
        }
        masks.push(m);
    }
    (img, masks)
}
