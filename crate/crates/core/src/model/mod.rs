//! Dataset model shared by every stage: images, masks, questions, manifests.

mod codec;
pub mod label;
pub mod mask;
mod types;
mod validate;

pub use codec::{
    canonical_serialize, load_manifest, manifest_hash, parse_manifest, read_manifest, save_manifest,
    write_manifest, ManifestError,
};
pub use label::{label_index, option_label, option_labels};
pub use mask::{Mask, Rle, RleError};
pub use types::{
    AnswerOption, DatasetManifest, ImageEntry, ImageRef, MatchType, MatchingQuestion, ObjectReferral,
    Provenance, QuestionTag, ReferringMode, SegmentedObject, SFT_UNTYPED,
};
pub use validate::{validate_manifest, validate_rasters, Violation};

pub const MANIFEST_VERSION: &str = "mmvm-manifest/1";

/// Resolve an image uri against the directory holding the manifest.
pub fn resolve_uri(root: &std::path::Path, uri: &str) -> std::path::PathBuf {
    let p = std::path::Path::new(uri);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}
