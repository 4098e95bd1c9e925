use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::sha256_hex;
use crate::Scalar;

use super::FeatureMap;

/// Frozen image encoder producing a spatial feature grid.
///
/// Implementations must be deterministic and must not change their parameters;
/// [`VisionEncoder::parameter_hash`] is checked before and after training.
pub trait VisionEncoder<T: Scalar>: Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn stride(&self) -> u32;
    fn encode(&self, image: &RgbImage) -> FeatureMap<T>;
    fn parameter_hash(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyKind {
    /// Colour mean and second moment per cell.
    Base,
    /// Base statistics plus mean absolute horizontal/vertical gradients per channel.
    Expert,
}

impl ToyKind {
    fn stat_count(self) -> usize {
        match self {
            ToyKind::Base => 6,
            ToyKind::Expert => 12,
        }
    }
}

/// Random features of per-cell image statistics: `tanh(P s + b)` with `P`, `b`
/// drawn once from the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder<T> {
    name: String,
    kind: ToyKind,
    stride: u32,
    channels: usize,
    seed: u64,
    /// `channels x stat_count`, row-major.
    projection: Vec<T>,
    bias: Vec<T>,
}

pub const BASE_CHANNELS: usize = 32;
pub const BASE_STRIDE: u32 = 8;
pub const EXPERT_CHANNELS: usize = 48;
pub const EXPERT_STRIDE: u32 = 4;

impl<T: Scalar> ToyEncoder<T> {
    pub fn new(name: &str, kind: ToyKind, channels: usize, stride: u32, seed: u64) -> Self {
        assert!(channels > 0 && stride > 0);
        let stats = kind.stat_count();
        let bound = (3.0 / stats as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..channels * stats)
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
            .collect();
        let bias = (0..channels).map(|_| T::from_f64_lossy(rng.random_range(-1.0..1.0))).collect();
        Self {
            name: name.to_string(),
            kind,
            stride,
            channels,
            seed,
            projection,
            bias,
        }
    }

    pub fn base(seed: u64) -> Self {
        Self::new("toy-base", ToyKind::Base, BASE_CHANNELS, BASE_STRIDE, seed)
    }

    pub fn expert(seed: u64) -> Self {
        Self::new("toy-expert", ToyKind::Expert, EXPERT_CHANNELS, EXPERT_STRIDE, seed)
    }

    pub fn kind(&self) -> ToyKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn cell_stats(&self, image: &RgbImage, x0: u32, y0: u32, x1: u32, y1: u32) -> Vec<f64> {
        let (w, h) = image.dimensions();
        let norm = |v: u8| v as f64 / 127.5 - 1.0;
        let mut s = vec![0.0f64; self.kind.stat_count()];
        for y in y0..y1 {
            for x in x0..x1 {
                let p = image.get_pixel(x, y).0;
                for c in 0..3 {
                    let v = norm(p[c]);
                    s[c] += v;
                    s[3 + c] += v * v;
                }
                if self.kind == ToyKind::Expert {
                    let right = image.get_pixel((x + 1).min(w - 1), y).0;
                    let down = image.get_pixel(x, (y + 1).min(h - 1)).0;
                    for c in 0..3 {
                        s[6 + c] += (norm(right[c]) - norm(p[c])).abs();
                        s[9 + c] += (norm(down[c]) - norm(p[c])).abs();
                    }
                }
            }
        }
        let n = ((x1 - x0) * (y1 - y0)) as f64;
        s.iter_mut().for_each(|v| *v /= n);
        s
    }
}

impl<T: Scalar> VisionEncoder<T> for ToyEncoder<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self) -> usize {
        self.channels
    }

    fn stride(&self) -> u32 {
        self.stride
    }

    fn encode(&self, image: &RgbImage) -> FeatureMap<T> {
        let (w, h) = image.dimensions();
        let gw = w.div_ceil(self.stride);
        let gh = h.div_ceil(self.stride);
        let stats = self.kind.stat_count();
        let mut data = Vec::with_capacity((gw * gh) as usize * self.channels);
        for gy in 0..gh {
            for gx in 0..gw {
                let x0 = gx * self.stride;
                let y0 = gy * self.stride;
                let s = self.cell_stats(image, x0, y0, (x0 + self.stride).min(w), (y0 + self.stride).min(h));
                for (row, b) in self.projection.chunks(stats).zip(&self.bias) {
                    let v: f64 = row.iter().zip(&s).map(|(p, x)| p.to_f64_lossy() * x).sum();
                    data.push(T::from_f64_lossy((v + b.to_f64_lossy()).tanh()));
                }
            }
        }
        FeatureMap::new(self.channels, (w, h), self.stride, data).expect("toy encoder output is well formed")
    }

    fn parameter_hash(&self) -> String {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(self.name.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&self.stride.to_le_bytes());
        bytes.extend_from_slice(&(self.channels as u64).to_le_bytes());
        for p in self.projection.iter().chain(&self.bias) {
            bytes.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
        }
        sha256_hex(&bytes)
    }
}
