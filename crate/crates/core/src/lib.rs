//! Visual-matching data pipeline and object-level contrastive adapter kernel.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`model`]: manifest types, mask RLE codec, validation and canonical serialization.
//! - [`render`]: contour + ID-tag visual prompts, vertical concatenation, palette.
//! - [`qagen`]: frame-pair sampling, multiple-choice question construction, reason annotation.
//! - [`pseudo`]: pseudo-video pairs simulated from single segmented images.
//! - [`ocl`]: frozen toy encoders, masked average pooling, contrastive loss, adapter training.
//! - [`sft`]: instruction-record formatting (edited-image and object-slot variants).
//! - [`eval`]: choice extraction, scoring, model runs and leaderboard emission.
//!
//! The numeric kernel in [`ocl`] is generic over [`Scalar`]; the aliases below pin it
//! to `f64` (the default used by the CLI) and `f32`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chat;
pub mod eval;
pub mod hash;
pub mod model;
pub mod ocl;
pub mod pseudo;
pub mod qagen;
pub mod render;
pub mod scalar;
pub mod selftest;
pub mod sft;
pub mod synth;

pub use scalar::Scalar;

/// Raster type used throughout the crate.
pub type Raster = image::RgbImage;

pub type FeatureMapF64 = ocl::FeatureMap<f64>;
pub type FeatureMapF32 = ocl::FeatureMap<f32>;
pub type AdapterF64 = ocl::Adapter<f64>;
pub type AdapterF32 = ocl::Adapter<f32>;
pub type ContrastiveBatchF64 = ocl::ContrastiveBatch<f64>;
pub type ContrastiveBatchF32 = ocl::ContrastiveBatch<f32>;
pub type ObjectEmbeddingF64 = ocl::ObjectEmbedding<f64>;
pub type ToyEncoderF64 = ocl::ToyEncoder<f64>;
pub type ToyEncoderF32 = ocl::ToyEncoder<f32>;

/// Artifact version plus the on-disk format versions it reads and writes.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
