//! Independent reference computations. None of these call the routine they check.

use std::collections::HashSet;

use mmvm_core::model::Mask;
use mmvm_core::ocl::{contrastive_loss, ContrastiveBatch, LossConfig, ObjectEmbedding};
use mmvm_core::qagen::VideoAnnotation;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Rounds `100 * c / n` to two decimals, half-up, by long division.
pub fn percent(c: u64, n: u64) -> String {
    let scaled = c * 10_000;
    let (q, r) = (scaled / n, scaled % n);
    let h = if 2 * r >= n { q + 1 } else { q };
    format!("{}.{:02}", h / 100, h % 100)
}

pub fn gaussianish(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    // sum of uniforms, good enough for test data
    (0..n).map(|_| scale * (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() / 2.0).collect()
}

/// Dims 4..=64, 1..=16 negatives, entries scaled so logits stay moderate.
pub fn random_batch(rng: &mut ChaCha8Rng) -> ContrastiveBatch<f64> {
    let d = rng.random_range(4..=64);
    let k = rng.random_range(1..=16);
    let s = 2.0 / (d as f64).sqrt();
    ContrastiveBatch {
        anchor: ObjectEmbedding::new(gaussianish(rng, d, s), "a", "t"),
        positive: ObjectEmbedding::new(gaussianish(rng, d, s), "b", "t"),
        negatives: (0..k).map(|i| ObjectEmbedding::new(gaussianish(rng, d, s), "b", &format!("n{i}"))).collect(),
    }
}

fn flatten(b: &ContrastiveBatch<f64>) -> Vec<f64> {
    let mut v = b.anchor.vector.clone();
    v.extend(&b.positive.vector);
    for n in &b.negatives {
        v.extend(&n.vector);
    }
    v
}

fn unflatten(b: &ContrastiveBatch<f64>, v: &[f64]) -> ContrastiveBatch<f64> {
    let d = b.anchor.dim();
    let mut out = b.clone();
    out.anchor.vector = v[..d].to_vec();
    out.positive.vector = v[d..2 * d].to_vec();
    for (i, n) in out.negatives.iter_mut().enumerate() {
        n.vector = v[(2 + i) * d..(3 + i) * d].to_vec();
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|analytic - numeric| / max(|analytic|, |numeric|)` over the whole gradient,
/// numeric by central differences.
pub fn gradient_relative_error(b: &ContrastiveBatch<f64>, cfg: &LossConfig) -> f64 {
    let h = 1e-6;
    let out = contrastive_loss(b, cfg).unwrap();
    let mut analytic = out.grad_anchor.clone();
    analytic.extend(&out.grad_positive);
    for g in &out.grad_negatives {
        analytic.extend(g);
    }
    let x = flatten(b);
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let lp = contrastive_loss(&unflatten(b, &p), cfg).unwrap().loss;
            let lm = contrastive_loss(&unflatten(b, &m), cfg).unwrap().loss;
            (lp - lm) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}

/// Direct per-pixel accumulation of the pooling rule: cells at least half covered
/// (by in-image area), else the cell holding the centroid of the covered area.
pub fn pool(channels: usize, w: u32, h: u32, stride: u32, data: &[f64], mask: &[bool]) -> Vec<f64> {
    let gw = w.div_ceil(stride);
    let gh = h.div_ceil(stride);
    let mut covered = vec![0u32; (gw * gh) as usize];
    let mut area = vec![0u32; (gw * gh) as usize];
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let c = ((y / stride) * gw + x / stride) as usize;
            area[c] += 1;
            if mask[(y * w + x) as usize] {
                covered[c] += 1;
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1.0;
            }
        }
    }
    let mut chosen: Vec<usize> = (0..covered.len()).filter(|&c| covered[c] > 0 && 2 * covered[c] >= area[c]).collect();
    if chosen.is_empty() {
        let cx = ((sx / n / stride as f64) as u32).min(gw - 1);
        let cy = ((sy / n / stride as f64) as u32).min(gh - 1);
        chosen.push((cy * gw + cx) as usize);
    }
    let mut out = vec![0.0; channels];
    for &c in &chosen {
        for k in 0..channels {
            out[k] += data[c * channels + k];
        }
    }
    out.iter().map(|s| s / chosen.len() as f64).collect()
}

/// A random rectangle, a single pixel or sparse noise.
pub fn random_mask_bits(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<bool> {
    let mut bits = vec![false; (w * h) as usize];
    match rng.random_range(0..3) {
        0 => {
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let (x1, y1) = (rng.random_range(x0..w), rng.random_range(y0..h));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    bits[(y * w + x) as usize] = true;
                }
            }
        }
        1 => {
            let i = rng.random_range(0..bits.len());
            bits[i] = true;
        }
        _ => {
            for b in bits.iter_mut() {
                *b = rng.random_bool(0.2);
            }
            let i = rng.random_range(0..bits.len());
            bits[i] = true;
        }
    }
    bits
}

/// Pixels within Chebyshev distance `t - 1` of a set cell that has an unset
/// (or off-raster) 4-neighbour.
pub fn contour_band(m: &Mask, t: u32) -> Vec<bool> {
    let (w, h) = m.dimensions();
    let on = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && m.get(x as u32, y as u32);
    let r = t as i64 - 1;
    let mut out = vec![false; (w * h) as usize];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut hit = false;
            for by in y - r..=y + r {
                for bx in x - r..=x + r {
                    if on(bx, by) && !(on(bx - 1, by) && on(bx + 1, by) && on(bx, by - 1) && on(bx, by + 1)) {
                        hit = true;
                    }
                }
            }
            out[(y as u32 * w + x as u32) as usize] = hit;
        }
    }
    out
}

/// Questions a video yields at a one-second interval when `fps` is a whole
/// number: the kept frames are every `fps`-th one, and each consecutive kept
/// pair asks about every track in both, provided the second has two objects.
pub fn question_count(v: &VideoAnnotation) -> usize {
    assert_eq!(v.fps.fract(), 0.0);
    let kept: Vec<usize> = (0..v.frames.len()).step_by(v.fps as usize).collect();
    kept.windows(2)
        .map(|w| {
            let (a, b) = (&v.frames[w[0]], &v.frames[w[1]]);
            if b.objects.len() < 2 {
                return 0;
            }
            let in_b: HashSet<&str> = b.objects.iter().map(|o| o.track_id.as_str()).collect();
            a.objects.iter().filter(|o| in_b.contains(o.track_id.as_str())).count()
        })
        .sum()
}
