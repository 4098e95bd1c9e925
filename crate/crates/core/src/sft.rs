//! Instruction records for supervised fine-tuning.
//!
//! Variant A presents edited images only:
//! `<images>\n<system> <question+answer>`. Variant B additionally lists one
//! placeholder per candidate object (`object-1: <Obj 1>, ...`) that a consumer
//! binds to pooled object features at load time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MatchingQuestion, ObjectReferral};

pub const SFT_FORMAT_VERSION: &str = "mmvm-sft/1";

/// System text shared by both variants (and by evaluation prompts).
pub const SYSTEM_TEXT_V1: &str = "Here are two images. In the second image, I have marked several visual objects with their contours in different colors, and each is identified by a white ID against a background that matches the contour's color.";

pub const IMAGE_TOKEN: &str = "<image>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Edited images only.
    A,
    /// Edited images plus object-representation slots.
    B,
}

impl Variant {
    pub fn system_text(self) -> &'static str {
        SYSTEM_TEXT_V1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VariantMode {
    A,
    B,
    /// Variant B with probability `p`, independently per question.
    Mix(f64),
    /// Both variants for every question, A first.
    Both,
}

impl std::str::FromStr for VariantMode {
    type Err = String;

    /// `A`, `B`, `both`, `mix` (p = 0.5) or `mix:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(VariantMode::A),
            "B" | "b" => Ok(VariantMode::B),
            "both" => Ok(VariantMode::Both),
            "mix" => Ok(VariantMode::Mix(0.5)),
            _ => match s.strip_prefix("mix:").map(str::parse::<f64>) {
                Some(Ok(p)) => Ok(VariantMode::Mix(p)),
                _ => Err(format!("unknown variant mode {s:?} (expected A, B, mix, mix:<p> or both)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SftError {
    #[error("question {0}: option {1} has no segmented object to bind a slot to")]
    NoObjectRepresentation(String, String),
    #[error("probability must be in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("question {0} has no options")]
    NoOptions(String),
}

/// Placeholder for one candidate object, bound late to a pooled feature of
/// `(image_id, track_id)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSlot {
    /// `object-k`.
    pub name: String,
    /// `<Obj k>`, as it appears in the human turn.
    pub placeholder: String,
    pub image_id: String,
    pub track_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub from: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub question_id: String,
    pub variant: Variant,
    /// Edited (visual-prompt rendered) images, one per question image.
    pub images: Vec<String>,
    pub system: String,
    pub object_slots: Vec<ObjectSlot>,
    pub conversations: Vec<Turn>,
}

/// Path of the `k`-th edited image of a question, relative to the SFT output root.
pub fn edited_image_path(question_id: &str, k: usize) -> String {
    format!("edited/{}/{k}.png", question_id.replace('/', "__"))
}

/// Question body: the query, the lettered options and the answer instruction.
pub fn question_text(q: &MatchingQuestion) -> String {
    let mut s = match &q.query {
        ObjectReferral::VisualPrompt { prompt, .. } => format!(
            "In the first image, the query object is marked with ID {}.",
            prompt.object_tag
        ),
        ObjectReferral::TextPrompt { text } => format!("The query object in the first image is: {text}."),
    };
    s.push_str(" Which object in the second image is the same instance as the query object?\n");
    for o in &q.options {
        s.push_str(&format!("{}. {}\n", o.label, o.object.display_text()));
    }
    s.push_str("Answer with the option's letter from the given choices.");
    s
}

pub fn answer_text(q: &MatchingQuestion) -> String {
    match &q.reason {
        Some(r) => format!("Answer: {}\nReason: {}", q.answer, r),
        None => format!("Answer: {}", q.answer),
    }
}

fn object_slots(q: &MatchingQuestion) -> Result<Vec<ObjectSlot>, SftError> {
    // Options carry tags 1..n in label order, so slot k is option k.
    q.options
        .iter()
        .enumerate()
        .map(|(i, o)| match &o.object {
            ObjectReferral::VisualPrompt { image_id, track_id, .. } => Ok(ObjectSlot {
                name: format!("object-{}", i + 1),
                placeholder: format!("<Obj {}>", i + 1),
                image_id: image_id.clone(),
                track_id: track_id.clone(),
            }),
            ObjectReferral::TextPrompt { .. } => Err(SftError::NoObjectRepresentation(q.id.clone(), o.label.clone())),
        })
        .collect()
}

pub fn format_record(q: &MatchingQuestion, variant: Variant) -> Result<InstructionRecord, SftError> {
    if q.options.is_empty() {
        return Err(SftError::NoOptions(q.id.clone()));
    }
    let slots = match variant {
        Variant::A => Vec::new(),
        Variant::B => object_slots(q)?,
    };
    let images: Vec<String> = (0..q.image_ids.len()).map(|k| edited_image_path(&q.id, k)).collect();
    let mut human = vec![IMAGE_TOKEN; images.len()].join("\n");
    human.push('\n');
    human.push_str(variant.system_text());
    if !slots.is_empty() {
        let info: Vec<String> = slots.iter().map(|s| format!("{}: {}", s.name, s.placeholder)).collect();
        human.push(' ');
        human.push_str(&info.join(", "));
    }
    human.push(' ');
    human.push_str(&question_text(q));
    let tag = match variant {
        Variant::A => "A",
        Variant::B => "B",
    };
    Ok(InstructionRecord {
        id: format!("{}#{tag}", q.id),
        question_id: q.id.clone(),
        variant,
        images,
        system: variant.system_text().to_string(),
        object_slots: slots,
        conversations: vec![
            Turn {
                from: "human".into(),
                value: human,
            },
            Turn {
                from: "gpt".into(),
                value: answer_text(q),
            },
        ],
    })
}

/// Format every question under `mode`; output follows input order.
pub fn mix_variants(questions: &[MatchingQuestion], mode: VariantMode, seed: u64) -> Result<Vec<InstructionRecord>, SftError> {
    if let VariantMode::Mix(p) = mode {
        if !(0.0..=1.0).contains(&p) {
            return Err(SftError::InvalidProbability(p));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(questions.len());
    for q in questions {
        match mode {
            VariantMode::A => out.push(format_record(q, Variant::A)?),
            VariantMode::B => out.push(format_record(q, Variant::B)?),
            VariantMode::Mix(p) => {
                let v = if rng.random_bool(p) { Variant::B } else { Variant::A };
                out.push(format_record(q, v)?);
            }
            VariantMode::Both => {
                out.push(format_record(q, Variant::A)?);
                out.push(format_record(q, Variant::B)?);
            }
        }
    }
    Ok(out)
}

pub fn write_records<W: std::io::Write>(records: &[InstructionRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records<R: std::io::BufRead>(r: R) -> Result<Vec<InstructionRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}
