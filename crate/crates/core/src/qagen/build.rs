use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FramePair, VideoAnnotation};
use crate::hash::derive_seed;
use crate::model::{option_label, AnswerOption, MatchingQuestion, ObjectReferral, QuestionTag};
use crate::render::{default_palette, VisualPromptSpec, DEFAULT_THICKNESS, MAX_PALETTE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionConfig {
    /// Maximum options per question (correct one included). `None` keeps every
    /// object of the second frame, up to the palette size.
    pub option_cap: Option<usize>,
    pub contour_thickness: u32,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        Self {
            option_cap: None,
            contour_thickness: DEFAULT_THICKNESS,
        }
    }
}

impl QuestionConfig {
    fn effective_cap(&self) -> usize {
        self.option_cap.unwrap_or(MAX_PALETTE).clamp(2, MAX_PALETTE)
    }
}

pub fn question_id(video_id: &str, first: &str, second: &str, track: &str) -> String {
    format!("{video_id}/{first}/{second}/{track}")
}

/// One question per shared track of `pair`.
///
/// The query is the track's object in the first frame (tag 1). Options are the
/// second frame's objects, the correct one plus every other object as a
/// distractor, subject to the cap. Options are shuffled with a per-question
/// seed, numbered 1..n in that order, and lettered A.. in tag order.
pub fn build_questions(
    video: &VideoAnnotation,
    pair: &FramePair,
    seed: u64,
    cfg: &QuestionConfig,
) -> Vec<MatchingQuestion> {
    let first = &video.frames[pair.first.index];
    let second = &video.frames[pair.second.index];
    let mut candidates: Vec<&crate::model::SegmentedObject> = second.objects.iter().collect();
    candidates.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    if candidates.len() < 2 {
        return Vec::new();
    }
    let cap = cfg.effective_cap();
    let palette = default_palette(MAX_PALETTE).expect("full palette");

    let mut out = Vec::new();
    for track in &pair.shared_tracks {
        let Some(query_obj) = first.objects.iter().find(|o| &o.track_id == track) else {
            continue;
        };
        let qid = question_id(&video.video_id, &first.frame_id, &second.frame_id, track);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            &[&video.video_id, &first.frame_id, &second.frame_id, track],
        ));

        let (correct, mut distractors): (Vec<_>, Vec<_>) =
            candidates.iter().copied().partition(|o| &o.track_id == track);
        let Some(correct) = correct.first().copied() else { continue };
        if distractors.len() + 1 > cap {
            distractors.shuffle(&mut rng);
            distractors.truncate(cap - 1);
            distractors.sort_by(|a, b| a.track_id.cmp(&b.track_id));
        }
        let mut chosen = distractors;
        chosen.push(correct);
        chosen.sort_by(|a, b| a.track_id.cmp(&b.track_id));
        chosen.shuffle(&mut rng);

        let mut answer = String::new();
        let options: Vec<AnswerOption> = chosen
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let label = option_label(i);
                if o.track_id == *track {
                    answer = label.clone();
                }
                AnswerOption {
                    label,
                    object: ObjectReferral::VisualPrompt {
                        image_id: second.image.id.clone(),
                        track_id: o.track_id.clone(),
                        prompt: VisualPromptSpec::new(i as u32 + 1, palette[i])
                            .with_thickness(cfg.contour_thickness),
                    },
                }
            })
            .collect();

        out.push(MatchingQuestion {
            id: qid,
            image_ids: vec![first.image.id.clone(), second.image.id.clone()],
            query: ObjectReferral::VisualPrompt {
                image_id: first.image.id.clone(),
                track_id: query_obj.track_id.clone(),
                prompt: VisualPromptSpec::new(1, palette[0]).with_thickness(cfg.contour_thickness),
            },
            options,
            answer,
            match_types: [QuestionTag::SftUntyped].into_iter().collect(),
            reason: None,
        });
    }
    out
}
