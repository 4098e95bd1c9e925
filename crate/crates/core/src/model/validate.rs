use std::collections::{HashMap, HashSet};
use std::fmt;

use super::label::option_label;
use super::types::{DatasetManifest, ObjectReferral, QuestionTag};

/// One broken invariant, naming the entity and the rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.entity, self.rule, self.detail)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, entity: impl Into<String>, rule: &'static str, detail: impl Into<String>) {
        self.0.push(Violation {
            entity: entity.into(),
            rule,
            detail: detail.into(),
        });
    }
}

/// Check every structural invariant of a parsed manifest. Empty result means valid.
pub fn validate_manifest(m: &DatasetManifest) -> Vec<Violation> {
    let mut v = Collector(Vec::new());

    // image id -> (width, height, track ids)
    let mut images: HashMap<&str, (u32, u32, HashSet<&str>)> = HashMap::new();
    for e in &m.images {
        let img = &e.image;
        let entity = format!("image {}", img.id);
        if img.width == 0 || img.height == 0 {
            v.push(&entity, "image-dimensions", format!("{}x{} is not at least 1x1", img.width, img.height));
        }
        if images.contains_key(img.id.as_str()) {
            v.push(&entity, "duplicate-image-id", "image id appears more than once");
            continue;
        }
        let mut tracks = HashSet::new();
        for o in &e.objects {
            let oe = format!("object {}/{}", img.id, o.track_id);
            if o.frame_id != img.id {
                v.push(&oe, "object-frame-mismatch", format!("frame_id {} differs from owning image", o.frame_id));
            }
            if o.mask.dimensions() != (img.width, img.height) {
                v.push(
                    &oe,
                    "mask-dimensions",
                    format!("mask {:?} vs image {}x{}", o.mask.dimensions(), img.width, img.height),
                );
            }
            if o.mask.is_empty() {
                v.push(&oe, "mask-empty", "mask has no set cell");
            }
            if !tracks.insert(o.track_id.as_str()) {
                v.push(&oe, "duplicate-track", "track appears twice in one frame");
            }
        }
        images.insert(&img.id, (img.width, img.height, tracks));
    }

    let mut question_ids = HashSet::new();
    for q in &m.questions {
        let entity = format!("question {}", q.id);
        if !question_ids.insert(q.id.as_str()) {
            v.push(&entity, "duplicate-question-id", "question id appears more than once");
        }
        if q.image_ids.len() < 2 {
            v.push(&entity, "image-count", format!("{} images, need at least 2", q.image_ids.len()));
        }
        for id in &q.image_ids {
            if !images.contains_key(id.as_str()) {
                v.push(&entity, "dangling-image-ref", format!("image {id} is not in the manifest"));
            }
        }
        if q.match_types.is_empty() {
            v.push(&entity, "match-types-empty", "question carries no tag");
        }
        if q.options.len() < 2 {
            v.push(&entity, "option-count", format!("{} options, need at least 2", q.options.len()));
        }
        for (i, o) in q.options.iter().enumerate() {
            let expected = option_label(i);
            if o.label != expected {
                v.push(&entity, "option-labels", format!("option {i} labelled {:?}, expected {expected:?}", o.label));
            }
        }
        if !q.options.iter().any(|o| o.label == q.answer) {
            v.push(&entity, "answer-label-missing", format!("answer {:?} is not an option label", q.answer));
        }

        let check_referral = |v: &mut Collector, what: &str, r: &ObjectReferral| match r {
            ObjectReferral::TextPrompt { text } => {
                if text.trim().is_empty() {
                    v.push(&entity, "text-referral-empty", format!("{what} has an empty description"));
                }
            }
            ObjectReferral::VisualPrompt {
                image_id,
                track_id,
                prompt,
            } => {
                if !q.image_ids.contains(image_id) {
                    v.push(&entity, "referral-image", format!("{what} points at image {image_id} outside the question"));
                }
                if let Some((_, _, tracks)) = images.get(image_id.as_str()) {
                    if !tracks.contains(track_id.as_str()) {
                        v.push(&entity, "referral-track", format!("{what} track {track_id} not annotated in {image_id}"));
                    }
                }
                if let Err(e) = prompt.check() {
                    v.push(&entity, "prompt-spec", format!("{what}: {e}"));
                }
            }
        };
        check_referral(&mut v, "query", &q.query);
        for o in &q.options {
            check_referral(&mut v, &format!("option {}", o.label), &o.object);
        }

        // Visual questions: the query's track must appear under exactly one option,
        // the answer, and never in the query's own image.
        if let ObjectReferral::VisualPrompt {
            image_id: qimg,
            track_id: qtrack,
            ..
        } = &q.query
        {
            let matching: Vec<&str> = q
                .options
                .iter()
                .filter(|o| o.object.track_id() == Some(qtrack.as_str()))
                .map(|o| o.label.as_str())
                .collect();
            let visual_options = q.options.iter().any(|o| o.object.track_id().is_some());
            if visual_options && (matching.len() != 1 || matching[0] != q.answer) {
                v.push(
                    &entity,
                    "single-correct-option",
                    format!("options sharing the query track: {matching:?}, answer {}", q.answer),
                );
            }
            for o in &q.options {
                if o.object.image_id() == Some(qimg.as_str()) {
                    v.push(&entity, "query-image-in-options", format!("option {} is drawn from the query image", o.label));
                }
            }
            // Per-image prompt distinctness.
            let mut seen: HashMap<&str, (HashSet<u32>, HashSet<[u8; 3]>)> = HashMap::new();
            for r in std::iter::once(&q.query).chain(q.options.iter().map(|o| &o.object)) {
                if let ObjectReferral::VisualPrompt { image_id, prompt, .. } = r {
                    let (tags, colors) = seen.entry(image_id).or_default();
                    if !tags.insert(prompt.object_tag) {
                        v.push(&entity, "duplicate-tag", format!("tag {} repeated in {image_id}", prompt.object_tag));
                    }
                    if !colors.insert(prompt.contour_color) {
                        v.push(&entity, "duplicate-color", format!("color {:?} repeated in {image_id}", prompt.contour_color));
                    }
                }
            }
        }
        if q.match_types.contains(&QuestionTag::SftUntyped) && q.match_types.len() > 1 {
            v.push(&entity, "mixed-tags", "training marker mixed with evaluation categories");
        }
    }
    v.0
}

/// Decode every raster referenced by the manifest and compare its size with the record.
pub fn validate_rasters(m: &DatasetManifest, root: &std::path::Path) -> Vec<Violation> {
    let mut out = Vec::new();
    for e in &m.images {
        let path = super::resolve_uri(root, &e.image.uri);
        match image::image_dimensions(&path) {
            Ok((w, h)) if (w, h) == (e.image.width, e.image.height) => {}
            Ok((w, h)) => out.push(Violation {
                entity: format!("image {}", e.image.id),
                rule: "raster-dimensions",
                detail: format!("decoded {w}x{h}, recorded {}x{}", e.image.width, e.image.height),
            }),
            Err(err) => out.push(Violation {
                entity: format!("image {}", e.image.id),
                rule: "raster-unreadable",
                detail: format!("{}: {err}", path.display()),
            }),
        }
    }
    out
}
