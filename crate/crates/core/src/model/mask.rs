//! Binary masks and the row-major run-length codec.
//!
//! Codec: cells are visited row by row (`index = y * width + x`). `counts`
//! alternates run lengths of unset and set cells and always starts with an
//! unset run, which is `0` when the first cell is set. Every later run is
//! non-zero and the runs sum to `width * height`. This makes the encoding of
//! a mask unique.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RleError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("run lengths sum to {got}, expected {expected}")]
    LengthMismatch { got: u64, expected: u64 },
    #[error("zero-length run at position {0} (only the first run may be empty)")]
    ZeroRun(usize),
}

/// Row-major run-length encoding of a binary mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, area {})", self.width, self.height, self.area())
    }
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Build from row-major booleans. Panics when the length does not match.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self { width, height, bits }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y as usize) * (self.width as usize) + x as usize]
    }

    /// Like [`Mask::get`] but out-of-range coordinates read as unset.
    #[inline]
    pub fn get_or_unset(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as u32, y as u32)
        }
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[(y as usize) * w + x as usize] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)`, `None` for an empty mask.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.iter_set();
        let (x, y) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some((x0, y0, x1, y1))
    }

    /// Mean `(x, y)` of set cells.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0f64, 0f64);
        for (x, y) in self.iter_set() {
            n += 1;
            sx += x as f64;
            sy += y as f64;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Clear every cell that is set in `other`. Dimensions must agree.
    pub fn subtract(&mut self, other: &Mask) {
        assert_eq!(self.dimensions(), other.dimensions());
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            if b {
                *a = false;
            }
        }
    }

    pub fn to_rle(&self) -> Rle {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &b in &self.bits {
            if b == current {
                run += 1;
            } else {
                counts.push(run);
                current = b;
                run = 1;
            }
        }
        counts.push(run);
        Rle {
            size: [self.height, self.width],
            counts,
        }
    }

    pub fn from_rle(rle: &Rle) -> Result<Self, RleError> {
        let [height, width] = rle.size;
        if width == 0 || height == 0 {
            return Err(RleError::EmptyDimensions { width, height });
        }
        let expected = width as u64 * height as u64;
        let got: u64 = rle.counts.iter().map(|&c| c as u64).sum();
        if got != expected {
            return Err(RleError::LengthMismatch { got, expected });
        }
        if let Some(pos) = rle.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(RleError::ZeroRun(pos + 1));
        }
        let mut bits = Vec::with_capacity(expected as usize);
        let mut value = false;
        for &c in &rle.counts {
            bits.extend(std::iter::repeat_n(value, c as usize));
            value = !value;
        }
        Ok(Self { width, height, bits })
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rle().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rle = Rle::deserialize(d)?;
        Mask::from_rle(&rle).map_err(serde::de::Error::custom)
    }
}
