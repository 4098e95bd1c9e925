//! Automatic visual-matching QA generation from video segmentation annotations.

mod annotate;
mod build;
pub mod coco;
mod sample;
pub mod synthetic;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotate::{
    annotate_reasons, describe_prompt, justify_prompt, AnnotateOptions, AnnotationFailure, AnnotationOutcome,
    AnnotatorClient, DescribeRequest, FailureKind, HttpAnnotator, JustifyRequest, ObjectRole, ReplayAnnotator,
    DESCRIBE_PROMPT_V1, JUSTIFY_PROMPT_V1, MAX_REASON_CHARS, PROMPT_VERSION,
};
pub use build::{build_questions, question_id, QuestionConfig};
pub use sample::{sample_pairs, sampled_frame_indices, FramePair, FrameRef};

use crate::hash::sha256_hex;
use crate::model::{DatasetManifest, ImageEntry, ImageRef, Provenance, SegmentedObject};

pub const GENERATOR_NAME: &str = "mmvm-qagen/1";

#[derive(Debug, Error, PartialEq)]
pub enum QaGenError {
    #[error("sampling interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("video {video_id}: fps must be positive, got {fps}")]
    InvalidFps { video_id: String, fps: f64 },
    #[error("video {video_id}: {message}")]
    InvalidVideo { video_id: String, message: String },
    #[error("image id {0} appears in more than one frame")]
    DuplicateImage(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    pub image: ImageRef,
    pub objects: Vec<SegmentedObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub fps: f64,
    /// In display order; frame `i` is shown at `i / fps`.
    pub frames: Vec<Frame>,
}

impl VideoAnnotation {
    pub fn check(&self) -> Result<(), QaGenError> {
        let bad = |message: String| QaGenError::InvalidVideo {
            video_id: self.video_id.clone(),
            message,
        };
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(QaGenError::InvalidFps {
                video_id: self.video_id.clone(),
                fps: self.fps,
            });
        }
        let mut ids = HashSet::new();
        for f in &self.frames {
            if !ids.insert(&f.frame_id) {
                return Err(bad(format!("frame {} repeated", f.frame_id)));
            }
            let mut tracks = HashSet::new();
            for o in &f.objects {
                if !tracks.insert(&o.track_id) {
                    return Err(bad(format!("track {} repeated in frame {}", o.track_id, f.frame_id)));
                }
                if o.frame_id != f.frame_id {
                    return Err(bad(format!("object {} carries frame id {}", o.track_id, o.frame_id)));
                }
                if o.mask.dimensions() != (f.image.width, f.image.height) {
                    return Err(bad(format!("mask of {} in {} has wrong size", o.track_id, f.frame_id)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub interval_seconds: f64,
    pub questions: QuestionConfig,
    pub annotate: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            interval_seconds: 1.0,
            questions: QuestionConfig::default(),
            annotate: false,
        }
    }
}

impl GenerateConfig {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug)]
pub struct GenerateOutput {
    pub manifest: DatasetManifest,
    /// Per-question annotation failures, sorted by question id.
    pub failures: Vec<AnnotationFailure>,
}

/// Sample pairs, build questions and optionally annotate reasons for every video.
///
/// Videos are processed in parallel; the manifest lists questions video by
/// video, pair by pair, in input order. Images appear in order of first use.
pub fn generate_dataset(
    videos: &[VideoAnnotation],
    cfg: &GenerateConfig,
    seed: u64,
    annotator: Option<(&dyn AnnotatorClient, &AnnotateOptions)>,
) -> Result<GenerateOutput, QaGenError> {
    for v in videos {
        v.check()?;
    }
    let per_video: Vec<Vec<(FramePair, Vec<crate::model::MatchingQuestion>)>> = videos
        .par_iter()
        .map(|v| {
            let pairs = sample_pairs(v, cfg.interval_seconds)?;
            Ok(pairs
                .into_iter()
                .map(|p| {
                    let qs = build_questions(v, &p, seed, &cfg.questions);
                    (p, qs)
                })
                .collect())
        })
        .collect::<Result<_, QaGenError>>()?;

    let mut manifest = DatasetManifest::new(Provenance {
        generator: GENERATOR_NAME.to_string(),
        seed,
        config_hash: Some(cfg.hash()),
    });
    let mut seen_images = HashSet::new();
    let mut all_images = HashSet::new();
    for (v, pairs) in videos.iter().zip(per_video) {
        for f in &v.frames {
            if !all_images.insert(f.image.id.clone()) {
                return Err(QaGenError::DuplicateImage(f.image.id.clone()));
            }
        }
        for (pair, qs) in pairs {
            if qs.is_empty() {
                continue;
            }
            for idx in [pair.first.index, pair.second.index] {
                let f = &v.frames[idx];
                if seen_images.insert(f.image.id.clone()) {
                    manifest.images.push(ImageEntry {
                        image: f.image.clone(),
                        objects: f.objects.clone(),
                    });
                }
            }
            manifest.questions.extend(qs);
        }
    }

    let mut failures = Vec::new();
    if cfg.annotate {
        if let Some((client, opts)) = annotator {
            let questions = std::mem::take(&mut manifest.questions);
            let outcome = annotate_reasons(questions, &manifest.images, client, opts);
            manifest.questions = outcome.questions;
            failures = outcome.failures;
        }
    }
    Ok(GenerateOutput { manifest, failures })
}
