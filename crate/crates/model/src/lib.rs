//! Desk-scale text-to-molecule backbone and hierarchical textual inversion.
//!
//! The backbone is a small causal transformer trained from scratch on SMILES
//! with a short text prompt. Once frozen, new token embeddings can be learned
//! against it ([`inversion`]) and interpolated to sample new molecules
//! ([`sampler`]).

pub mod backbone;
pub mod checkpoint;
pub mod inversion;
pub mod optim;
pub mod pretrain;
pub mod sampler;
pub mod stats;
pub mod tape;
pub mod tensor;
pub mod vocab;

pub use backbone::{Backbone, DecodeConfig, Decoded, ModelConfig, ModelError};
pub use checkpoint::CheckpointError;
pub use inversion::{EmbeddingCheckpoint, HierarchicalEmbeddings, InversionConfig, InversionError, Levels};
pub use pretrain::{pretrain, PretrainConfig, PretrainError};
pub use sampler::{sample, sample_baseline, SampleBatch, SampleRecord, SamplerConfig, SamplerError};
pub use stats::ActivationStats;
pub use vocab::Vocab;
