//! Vision-transformer viewport scorer.
//!
//! A viewport is cut into patches, each patch is encoded to a token,
//! positional, geometric (viewport center) and source (originating image)
//! embeddings are added, a CLS token is prepended, and a pre-norm transformer
//! reduces the sequence to the CLS representation, which an affine head turns
//! into a quality score. Image scores are the mean over viewports.

mod checkpoint;
mod config;
mod forward;
mod ops;
mod params;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SourceKey, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{EncoderKind, ModelConfig, CONV1_CHANNELS, CONV2_CHANNELS};
pub use forward::{
    add_embeddings, encode_patches, patchify, score_image, score_viewport, transformer_forward, TokenSequence,
    ViewportForward,
};
pub use ops::Activation;
pub use params::{tensor_specs, EncoderParams, LayerParams, ModelParams, TensorSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("viewport resolution {resolution} is not divisible by patch size {patch}")]
    IndivisibleResolution { resolution: usize, patch: usize },
    #[error("{patches} patches exceed max_patches = {max}")]
    TooManyPatches { patches: usize, max: usize },
    #[error("source index {index} outside table of {rows} rows")]
    BadSourceIndex { index: usize, rows: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value after {0}")]
    NumericOverflow(&'static str),
    #[error("cannot aggregate an empty viewport list")]
    EmptyViewports,
    #[error("checkpoint i/o on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("checkpoint config does not match the requested model config")]
    ConfigMismatch,
}
