//! Object-level contrastive alignment of a frozen expert encoder to a frozen base encoder.
//!
//! Objects are pooled from each encoder's feature grid under their masks. Expert-side
//! features of view A go through a small [`Adapter`]; the contrastive loss pulls each
//! one toward the base-side feature of the same track in view B and away from the
//! other objects of view B. Only the adapter is trained.

mod adapter;
mod checkpoint;
mod encoder;
mod feature;
mod loss;
mod train;

pub use adapter::{Activation, Adapter, AdapterGrads, ForwardCache};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{ToyEncoder, ToyKind, VisionEncoder, BASE_CHANNELS, BASE_STRIDE, EXPERT_CHANNELS, EXPERT_STRIDE};
pub use feature::{masked_average_pool, FeatureMap};
pub use loss::{
    contrastive_loss, first_logit_cross_entropy, match_probability, ContrastiveBatch, LossConfig, LossOutput,
    ObjectEmbedding,
};
pub use train::{
    build_batches, match_by_embedding, pool_pair, pool_stream, pretrain_adapter, retrieval_accuracy, trace_csv,
    train_adapter, PooledPair, PretrainConfig, PretrainOutput, RankedCandidate, RetrievalReport, StepRecord,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OclError {
    #[error("invalid feature map: {0}")]
    InvalidFeatureMap(String),
    #[error("mask is {mask:?} but the image is {image:?}")]
    MaskSize { mask: (u32, u32), image: (u32, u32) },
    #[error("mask is empty")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),
    #[error("cannot normalise a zero vector")]
    ZeroNorm,
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("pair {0} has no track with both a positive and a negative")]
    NoUsableTracks(String),
    #[error("no usable pairs in the stream")]
    EmptyStream,
    #[error("loss diverged at step {step}")]
    Diverged { step: usize },
    #[error("encoder parameters changed during training")]
    EncoderMutated,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
