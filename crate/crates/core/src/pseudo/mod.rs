//! Pseudo-video pairs: two independently augmented views of one segmented
//! image with known object correspondence.

mod transform;

use std::collections::BTreeSet;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use transform::{CropRect, TransformChain};

use crate::hash::derive_seed;
use crate::model::SegmentedObject;
use crate::synth::{paint_scene, random_kind, spread_colors, textured_background, Shape};

/// Objects with fewer pixels after transformation leave the correspondence.
pub const MIN_VISIBLE_PX: usize = 16;
/// Seeds tried per stream item before giving up.
pub const MAX_RESAMPLE: u32 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum PseudoError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("no object survives in both views")]
    NoSurvivingCorrespondence,
    #[error("object {track_id} mask does not match the image size")]
    MaskMismatch { track_id: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("stream item {index} ({source_id}): no surviving correspondence after {attempts} seeds")]
    Exhausted {
        index: usize,
        source_id: String,
        attempts: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Crop area as a fraction of the image, sampled uniformly in `[lo, hi]`.
    pub crop_scale_range: (f64, f64),
    /// Output `(width, height)` of the resize step; `None` keeps the crop size.
    pub resize_target: Option<(u32, u32)>,
    pub hflip_prob: f64,
    /// Candidate rotations in degrees, chosen uniformly.
    pub rotation_degrees: Vec<f64>,
    /// Permit angles other than multiples of 90.
    pub allow_arbitrary_rotation: bool,
    pub min_visible_px: usize,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            crop_scale_range: (0.5, 1.0),
            resize_target: None,
            hflip_prob: 0.5,
            rotation_degrees: vec![0.0, 90.0, 180.0, 270.0],
            allow_arbitrary_rotation: false,
            min_visible_px: MIN_VISIBLE_PX,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// Full crop, no resize, no flip, no rotation.
    pub fn identity(seed: u64) -> Self {
        Self {
            crop_scale_range: (1.0, 1.0),
            resize_target: None,
            hflip_prob: 0.0,
            rotation_degrees: vec![0.0],
            allow_arbitrary_rotation: false,
            min_visible_px: 1,
            seed,
        }
    }

    pub fn check(&self) -> Result<(), PseudoError> {
        let bad = |m: &str| Err(PseudoError::InvalidConfig(m.to_string()));
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("crop scale range must satisfy 0 < lo <= hi <= 1");
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return bad("hflip probability outside [0, 1]");
        }
        if self.rotation_degrees.is_empty() {
            return bad("rotation set is empty");
        }
        if !self.allow_arbitrary_rotation
            && self.rotation_degrees.iter().any(|d| d.rem_euclid(90.0) != 0.0)
        {
            return bad("non-right-angle rotation needs allow_arbitrary_rotation");
        }
        if let Some((w, h)) = self.resize_target {
            if w == 0 || h == 0 {
                return bad("resize target must be at least 1x1");
            }
        }
        Ok(())
    }

    fn sample_chain<R: Rng>(&self, rng: &mut R, width: u32, height: u32) -> TransformChain {
        let (lo, hi) = self.crop_scale_range;
        let s = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let cw = ((width as f64 * s.sqrt()).round() as u32).clamp(1, width);
        let ch = ((height as f64 * s.sqrt()).round() as u32).clamp(1, height);
        let x = rng.random_range(0..=width - cw);
        let y = rng.random_range(0..=height - ch);
        let hflip = rng.random_bool(self.hflip_prob);
        let rotation_degrees = self.rotation_degrees[rng.random_range(0..self.rotation_degrees.len())];
        TransformChain {
            source: (width, height),
            crop: CropRect {
                x,
                y,
                width: cw,
                height: ch,
            },
            resize: self.resize_target.unwrap_or((cw, ch)),
            hflip,
            rotation_degrees,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: RgbImage,
    /// Objects visible in this view (at least `min_visible_px` pixels).
    pub objects: Vec<SegmentedObject>,
    pub transform: TransformChain,
}

impl View {
    pub fn object(&self, track_id: &str) -> Option<&SegmentedObject> {
        self.objects.iter().find(|o| o.track_id == track_id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPair {
    pub source_id: String,
    pub seed: u64,
    pub view_a: View,
    pub view_b: View,
    /// Tracks visible in both views, sorted. The correspondence is the identity on these ids.
    pub correspondence: Vec<String>,
}

/// Auditable record of how a pair was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLog {
    pub index: usize,
    pub source_id: String,
    pub seed: u64,
    pub view_a: TransformChain,
    pub view_b: TransformChain,
    pub correspondence: Vec<String>,
}

impl PseudoPair {
    pub fn log(&self, index: usize) -> PairLog {
        PairLog {
            index,
            source_id: self.source_id.clone(),
            seed: self.seed,
            view_a: self.view_a.transform.clone(),
            view_b: self.view_b.transform.clone(),
            correspondence: self.correspondence.clone(),
        }
    }
}

fn make_view(image: &RgbImage, objects: &[SegmentedObject], chain: TransformChain, min_px: usize, tag: &str) -> View {
    let out = chain.apply_image(image);
    let objects = objects
        .iter()
        .filter_map(|o| {
            let mask = chain.apply_mask(&o.mask);
            (mask.area() >= min_px).then(|| SegmentedObject {
                track_id: o.track_id.clone(),
                frame_id: format!("{}#{tag}", o.frame_id),
                mask,
                category: o.category.clone(),
            })
        })
        .collect();
    View {
        image: out,
        objects,
        transform: chain,
    }
}

/// Sample two independent transform chains from `cfg.seed` and apply them.
pub fn simulate_pair(
    source_id: &str,
    image: &RgbImage,
    objects: &[SegmentedObject],
    cfg: &AugmentationConfig,
) -> Result<PseudoPair, PseudoError> {
    cfg.check()?;
    let (w, h) = image.dimensions();
    for o in objects {
        if o.mask.dimensions() != (w, h) {
            return Err(PseudoError::MaskMismatch {
                track_id: o.track_id.clone(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let chain_a = cfg.sample_chain(&mut rng, w, h);
    let chain_b = cfg.sample_chain(&mut rng, w, h);
    let view_a = make_view(image, objects, chain_a, cfg.min_visible_px, "a");
    let view_b = make_view(image, objects, chain_b, cfg.min_visible_px, "b");
    let in_b: BTreeSet<&str> = view_b.objects.iter().map(|o| o.track_id.as_str()).collect();
    let correspondence: Vec<String> = view_a
        .objects
        .iter()
        .filter(|o| in_b.contains(o.track_id.as_str()))
        .map(|o| o.track_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if correspondence.is_empty() {
        return Err(PseudoError::NoSurvivingCorrespondence);
    }
    Ok(PseudoPair {
        source_id: source_id.to_string(),
        seed: cfg.seed,
        view_a,
        view_b,
        correspondence,
    })
}

/// A segmented still image.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusImage {
    pub id: String,
    pub image: RgbImage,
    pub objects: Vec<SegmentedObject>,
}

/// Seed used for attempt `attempt` of stream item `index`.
pub fn stream_seed(base: u64, index: usize, attempt: u32) -> u64 {
    derive_seed(base, &["pseudo-stream", &index.to_string(), &attempt.to_string()])
}

/// Exactly `count` pairs; item `i` uses corpus image `i % len` and seeds derived
/// from `(cfg.seed, i)`. Items with no surviving object are resampled with the
/// next derived seed. Generation is parallel, output order is index order.
pub fn build_pretrain_stream(
    corpus: &[CorpusImage],
    cfg: &AugmentationConfig,
    count: usize,
) -> Result<Vec<PseudoPair>, PseudoError> {
    cfg.check()?;
    if corpus.is_empty() {
        return Err(PseudoError::EmptyCorpus);
    }
    (0..count)
        .into_par_iter()
        .map(|i| {
            let item = &corpus[i % corpus.len()];
            for attempt in 0..MAX_RESAMPLE {
                let c = AugmentationConfig {
                    seed: stream_seed(cfg.seed, i, attempt),
                    ..cfg.clone()
                };
                match simulate_pair(&item.id, &item.image, &item.objects, &c) {
                    Ok(p) => return Ok(p),
                    Err(PseudoError::NoSurvivingCorrespondence) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(PseudoError::Exhausted {
                index: i,
                source_id: item.id.clone(),
                attempts: MAX_RESAMPLE,
            })
        })
        .collect()
}

/// Procedural segmented images: `objects` shapes of evenly spread hues on a
/// textured background, side lengths drawn from `64..=256`.
pub fn synthetic_shapes_corpus(count: usize, objects: std::ops::RangeInclusive<usize>, seed: u64) -> Vec<CorpusImage> {
    (0..count)
        .into_par_iter()
        .map(|i| synthetic_shapes_image(&format!("shape{i:04}"), objects.clone(), seed))
        .collect()
}

pub fn synthetic_shapes_image(id: &str, objects: std::ops::RangeInclusive<usize>, seed: u64) -> CorpusImage {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["shapes", id]));
    let w = rng.random_range(64..=256u32);
    let h = rng.random_range(64..=256u32);
    let n = rng.random_range(objects);
    let colors = spread_colors(&mut rng, n);
    let side = w.min(h) as f64;
    let max_r = (side * 0.45 / (n as f64).sqrt()).max(6.0);
    let min_r = (max_r * 0.5).max(4.0);
    let shapes: Vec<Shape> = colors
        .into_iter()
        .map(|color| {
            let rx = rng.random_range(min_r..=max_r);
            let ry = rng.random_range(min_r..=max_r);
            Shape {
                kind: random_kind(&mut rng),
                cx: rng.random_range(rx..=(w as f64 - rx).max(rx + 1.0)),
                cy: rng.random_range(ry..=(h as f64 - ry).max(ry + 1.0)),
                rx,
                ry,
                color,
            }
        })
        .collect();
    let bg = textured_background(&mut rng, w, h);
    let (image, masks) = paint_scene(&bg, &shapes);
    let objects = masks
        .into_iter()
        .enumerate()
        .filter(|(_, m)| m.area() >= 4 * MIN_VISIBLE_PX)
        .map(|(k, mask)| SegmentedObject {
            track_id: format!("{id}-o{k}"),
            frame_id: id.to_string(),
            mask,
            category: Some("shape".into()),
        })
        .collect();
    CorpusImage {
        id: id.to_string(),
        image,
        objects,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mask;

    fn corpus_item() -> CorpusImage {
        synthetic_shapes_image("t", 4..=6, 3)
    }

    #[test]
    fn identity_config_reproduces_input() {
        let c = corpus_item();
        let p = simulate_pair(&c.id, &c.image, &c.objects, &AugmentationConfig::identity(1)).unwrap();
        assert_eq!(p.view_a.image, c.image);
        assert_eq!(p.view_b.image, c.image);
        for o in &c.objects {
            assert_eq!(p.view_a.object(&o.track_id).unwrap().mask, o.mask);
            assert_eq!(p.view_b.object(&o.track_id).unwrap().mask, o.mask);
        }
        assert_eq!(p.correspondence.len(), c.objects.len());
    }

    #[test]
    fn survival_requires_both_views() {
        let c = corpus_item();
        let cfg = AugmentationConfig {
            crop_scale_range: (0.2, 0.4),
            seed: 11,
            ..Default::default()
        };
        for s in 0..20 {
            let cfg = AugmentationConfig { seed: s, ..cfg.clone() };
            match simulate_pair(&c.id, &c.image, &c.objects, &cfg) {
                Ok(p) => {
                    for t in &p.correspondence {
                        assert!(p.view_a.object(t).unwrap().mask.area() >= MIN_VISIBLE_PX);
                        assert!(p.view_b.object(t).unwrap().mask.area() >= MIN_VISIBLE_PX);
                    }
                    let a: BTreeSet<_> = p.view_a.objects.iter().map(|o| o.track_id.clone()).collect();
                    let b: BTreeSet<_> = p.view_b.objects.iter().map(|o| o.track_id.clone()).collect();
                    let both: Vec<_> = a.intersection(&b).cloned().collect();
                    assert_eq!(p.correspondence, both);
                }
                Err(e) => assert_eq!(e, PseudoError::NoSurvivingCorrespondence),
            }
        }
    }

    #[test]
    fn no_survivor_is_an_error() {
        let img = RgbImage::new(40, 40);
        let tiny = SegmentedObject {
            track_id: "x".into(),
            frame_id: "f".into(),
            mask: Mask::from_fn(40, 40, |x, y| x < 2 && y < 2),
            category: None,
        };
        let cfg = AugmentationConfig::identity(0);
        let cfg = AugmentationConfig { min_visible_px: 16, ..cfg };
        assert_eq!(
            simulate_pair("s", &img, &[tiny], &cfg),
            Err(PseudoError::NoSurvivingCorrespondence)
        );
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn config_validation() {
        let mut c = AugmentationConfig::default();
        c.crop_scale_range = (0.8, 0.5);
        assert!(c.check().is_err());
        let mut c = AugmentationConfig::default();
        c.rotation_degrees = vec![30.0];
        assert!(c.check().is_err());
        c.allow_arbitrary_rotation = true;
        assert!(c.check().is_ok());
        let mut c = AugmentationConfig::default();
        c.hflip_prob = 1.5;
        assert!(c.check().is_err());
    }

    #[test]
    fn stream_cycles_and_is_deterministic() {
        let corpus = synthetic_shapes_corpus(3, 4..=6, 5);
        let cfg = AugmentationConfig {
            seed: 9,
            ..Default::default()
        };
        assert!(build_pretrain_stream(&corpus, &cfg, 0).unwrap().is_empty());
        let s1 = build_pretrain_stream(&corpus, &cfg, 10).unwrap();
        assert_eq!(s1.len(), 10);
        for (i, p) in s1.iter().enumerate() {
            assert_eq!(p.source_id, corpus[i % 3].id);
        }
        let s2 = build_pretrain_stream(&corpus, &cfg, 10).unwrap();
        let logs1: Vec<_> = s1.iter().enumerate().map(|(i, p)| p.log(i)).collect();
        let logs2: Vec<_> = s2.iter().enumerate().map(|(i, p)| p.log(i)).collect();
        assert_eq!(logs1, logs2);
        assert_eq!(build_pretrain_stream(&[], &cfg, 3), Err(PseudoError::EmptyCorpus));
    }

    #[test]
    fn synthetic_corpus_objects_are_valid() {
        for c in synthetic_shapes_corpus(5, 5..=7, 1) {
            let (w, h) = c.image.dimensions();
            assert!((64..=256).contains(&w) && (64..=256).contains(&h));
            assert!(!c.objects.is_empty());
            for o in &c.objects {
                assert_eq!(o.mask.dimensions(), (w, h));
                assert!(o.mask.area() >= MIN_VISIBLE_PX);
            }
        }
    }
}
