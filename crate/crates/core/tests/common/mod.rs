#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeSet;

use mmvm_core::model::{
    option_label, AnswerOption, DatasetManifest, ImageEntry, ImageRef, MatchType, MatchingQuestion, Mask,
    ObjectReferral, Provenance, QuestionTag, SegmentedObject,
};
use mmvm_core::render::{default_palette, VisualPromptSpec};

pub const SIDE: u32 = 8;

fn image(id: &str, tracks: usize) -> ImageEntry {
    let objects = (0..tracks)
        .map(|t| SegmentedObject {
            track_id: format!("t{t}"),
            frame_id: id.to_string(),
            // one column per track
            mask: Mask::from_fn(SIDE, SIDE, |x, _| x as usize == t),
            category: None,
        })
        .collect();
    ImageEntry {
        image: ImageRef {
            id: id.to_string(),
            width: SIDE,
            height: SIDE,
            uri: format!("{id}.png"),
        },
        objects,
    }
}

/// `n` questions over one shared image pair, `options` choices each. Question `i`
/// asks about track `i % options`, whose option sits at position `(i / options) % options`.
pub fn fixture_manifest(n: usize, options: usize, tags: impl Fn(usize) -> BTreeSet<QuestionTag>) -> DatasetManifest {
    assert!(options >= 2 && options as u32 <= SIDE);
    let palette = default_palette(options).unwrap();
    let mut m = DatasetManifest::new(Provenance {
        generator: "fixture".into(),
        seed: 0,
        config_hash: None,
    });
    m.images.push(image("first", options));
    m.images.push(image("second", options));
    for i in 0..n {
        let track = i % options;
        let slot = (i / options) % options;
        // tracks in slot order: rotate so `track` lands at `slot`
        let order: Vec<usize> = (0..options).map(|k| (k + track + options - slot) % options).collect();
        let opts: Vec<AnswerOption> = order
            .iter()
            .enumerate()
            .map(|(k, &t)| AnswerOption {
                label: option_label(k),
                object: ObjectReferral::VisualPrompt {
                    image_id: "second".into(),
                    track_id: format!("t{t}"),
                    prompt: VisualPromptSpec::new(k as u32 + 1, palette[k]),
                },
            })
            .collect();
        m.questions.push(MatchingQuestion {
            id: format!("q{i:05}"),
            image_ids: vec!["first".into(), "second".into()],
            query: ObjectReferral::VisualPrompt {
                image_id: "first".into(),
                track_id: format!("t{track}"),
                prompt: VisualPromptSpec::new(1, palette[0]),
            },
            options: opts,
            answer: option_label(slot),
            match_types: tags(i),
            reason: None,
        });
    }
    m
}

pub fn typed(types: &[MatchType]) -> BTreeSet<QuestionTag> {
    types.iter().map(|&t| QuestionTag::Match(t)).collect()
}

pub fn cl_only(_: usize) -> BTreeSet<QuestionTag> {
    typed(&[MatchType::CL])
}
