//! Image and saliency ingestion, resampling, and dataset bookkeeping.

mod dataset;
mod pnm;
mod raster;

pub use dataset::{load_manifest, split_dataset, write_manifest, DatasetError, DatasetManifest, ManifestEntry};
pub use pnm::{decode_pnm, encode_pgm, encode_ppm, load_image, load_saliency, save_pgm, save_ppm, ImageError, Pnm};
pub use raster::{baseline_saliency, bilinear_sample, ErpImage, SaliencyMap, BASELINE_BLUR_SIZE};
