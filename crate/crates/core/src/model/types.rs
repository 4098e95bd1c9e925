use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mask::Mask;
use crate::render::VisualPromptSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    /// Raster location, relative to the manifest's directory unless absolute.
    pub uri: String,
}

/// One object instance in one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedObject {
    pub track_id: String,
    pub frame_id: String,
    pub mask: Mask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// The eight matching-cue categories used to slice evaluation accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchType {
    /// Color.
    CL,
    /// Shape or posture.
    SP,
    /// Textual or logo markers.
    TM,
    /// Size.
    SZ,
    /// Relative position in the scene.
    RP,
    /// Object orientation and movement.
    OO,
    /// Binding relationship with other objects.
    BR,
    /// Object markers.
    OM,
}

impl MatchType {
    /// Leaderboard column order.
    pub const ALL: [MatchType; 8] = [
        MatchType::CL,
        MatchType::SP,
        MatchType::TM,
        MatchType::SZ,
        MatchType::RP,
        MatchType::OO,
        MatchType::BR,
        MatchType::OM,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MatchType::CL => "CL",
            MatchType::SP => "SP",
            MatchType::TM => "TM",
            MatchType::SZ => "SZ",
            MatchType::RP => "RP",
            MatchType::OO => "OO",
            MatchType::BR => "BR",
            MatchType::OM => "OM",
        }
    }
}

impl fmt::Display for MatchType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MatchType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MatchType::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| format!("unknown match type {s:?}"))
    }
}

/// Tag carried by a question: one of the eight evaluation categories, or the
/// marker reserved for generated training items, which have no category annotator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QuestionTag {
    Match(MatchType),
    SftUntyped,
}

pub const SFT_UNTYPED: &str = "SFT-untyped";

impl fmt::Display for QuestionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuestionTag::Match(t) => t.fmt(f),
            QuestionTag::SftUntyped => f.write_str(SFT_UNTYPED),
        }
    }
}

impl FromStr for QuestionTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == SFT_UNTYPED {
            Ok(QuestionTag::SftUntyped)
        } else {
            s.parse().map(QuestionTag::Match)
        }
    }
}

impl TryFrom<String> for QuestionTag {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<QuestionTag> for String {
    fn from(t: QuestionTag) -> String {
        t.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferringMode {
    VisualPrompt,
    TextPrompt,
}

/// How a question points at an object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ObjectReferral {
    /// The object is marked in `image_id` with a contour and numeric tag.
    VisualPrompt {
        image_id: String,
        track_id: String,
        prompt: VisualPromptSpec,
    },
    /// Free-text description of the object.
    TextPrompt { text: String },
}

impl ObjectReferral {
    pub fn mode(&self) -> ReferringMode {
        match self {
            ObjectReferral::VisualPrompt { .. } => ReferringMode::VisualPrompt,
            ObjectReferral::TextPrompt { .. } => ReferringMode::TextPrompt,
        }
    }

    pub fn track_id(&self) -> Option<&str> {
        match self {
            ObjectReferral::VisualPrompt { track_id, .. } => Some(track_id),
            ObjectReferral::TextPrompt { .. } => None,
        }
    }

    pub fn image_id(&self) -> Option<&str> {
        match self {
            ObjectReferral::VisualPrompt { image_id, .. } => Some(image_id),
            ObjectReferral::TextPrompt { .. } => None,
        }
    }

    /// Human-readable content used in prompts and by the substring extractor tier.
    pub fn display_text(&self) -> String {
        match self {
            ObjectReferral::VisualPrompt { prompt, .. } => format!("Object {}", prompt.object_tag),
            ObjectReferral::TextPrompt { text } => text.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub object: ObjectReferral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingQuestion {
    pub id: String,
    pub image_ids: Vec<String>,
    pub query: ObjectReferral,
    pub options: Vec<AnswerOption>,
    pub answer: String,
    pub match_types: BTreeSet<QuestionTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl MatchingQuestion {
    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|o| o.label.clone()).collect()
    }

    pub fn answer_option(&self) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.label == self.answer)
    }

    pub fn evaluation_types(&self) -> impl Iterator<Item = MatchType> + '_ {
        self.match_types.iter().filter_map(|t| match t {
            QuestionTag::Match(m) => Some(*m),
            QuestionTag::SftUntyped => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// An image plus the object instances annotated in it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image: ImageRef,
    #[serde(default)]
    pub objects: Vec<SegmentedObject>,
}

impl ImageEntry {
    pub fn object(&self, track_id: &str) -> Option<&SegmentedObject> {
        self.objects.iter().find(|o| o.track_id == track_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub version: String,
    pub provenance: Provenance,
    pub images: Vec<ImageEntry>,
    pub questions: Vec<MatchingQuestion>,
}

impl DatasetManifest {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            version: super::MANIFEST_VERSION.to_string(),
            provenance,
            images: Vec::new(),
            questions: Vec::new(),
        }
    }

    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|e| e.image.id == id)
    }

    pub fn object(&self, image_id: &str, track_id: &str) -> Option<&SegmentedObject> {
        self.image(image_id)?.object(track_id)
    }
}
