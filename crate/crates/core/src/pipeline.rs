//! Glue shared by training, evaluation and the CLI: load one manifest entry
//! and sample its viewports with a seed keyed by the image path.

use std::path::Path;

use thiserror::Error;

use crate::imageio::{load_image, load_saliency, DatasetError, DatasetManifest, ImageError, ManifestEntry};
use crate::model::ModelError;
use crate::sampling::{sample_image, SampledImage, SamplerConfig, SamplingError};
use crate::seed::derive_seed;
use crate::Real;

/// Any failure of the end-to-end pipeline.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Invalid(String),
}

/// Sampler config whose seed is specialised to one image.
pub fn image_sampler(config: &SamplerConfig, image_key: &str) -> SamplerConfig {
    SamplerConfig {
        seed: derive_seed(config.seed, image_key),
        ..config.clone()
    }
}

/// Loads an image (and optional saliency map) and samples viewports with the
/// seed specialised to `key`.
pub fn sample_files<T: Real>(
    image: &Path,
    saliency: Option<&Path>,
    key: &str,
    config: &SamplerConfig,
    source_index: usize,
) -> Result<SampledImage<T>, PipelineError> {
    let img = load_image::<T>(image)?;
    let saliency = saliency.map(load_saliency::<T>).transpose()?;
    let cfg = image_sampler(config, key);
    Ok(sample_image(&img, saliency.as_ref(), &cfg, source_index)?)
}

/// Samples a manifest entry; the seed is keyed by its `image_path` string.
pub fn sample_entry<T: Real>(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    config: &SamplerConfig,
    source_index: usize,
) -> Result<SampledImage<T>, PipelineError> {
    let saliency = entry.saliency_path.as_ref().map(|p| manifest.resolve(p));
    sample_files(
        &manifest.resolve(&entry.image_path),
        saliency.as_deref(),
        &entry.image_path,
        config,
        source_index,
    )
}
