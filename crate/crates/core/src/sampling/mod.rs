//! Saliency-guided viewport sampling: smooth the saliency map, score strided
//! regions, pick a fraction of them, and render a viewport at each pick.

mod regions;
mod smooth;
mod viewport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use regions::{region_count, region_scores, sample_regions, select_regions, Region, RegionGrid};
pub use smooth::mean_shift_filter;
pub use viewport::{extract_viewport, TangentViewport};

use crate::imageio::{baseline_saliency, ErpImage, SaliencyMap};
use crate::sphere::{erp_to_sphere, GeometryError};
use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("region height {region} exceeds image height {height}")]
    RegionTooTall { region: usize, height: usize },
    #[error("region grid is empty")]
    EmptyGrid,
    #[error("saliency map {saliency_w}x{saliency_h} cannot be aligned with image {image_w}x{image_h}")]
    DimensionMismatch {
        image_w: usize,
        image_h: usize,
        saliency_w: usize,
        saliency_h: usize,
    },
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// How regions are chosen from their mean saliency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Weighted sampling without replacement, weights = mean saliency.
    #[default]
    SaliencyWeighted,
    /// Unweighted sampling without replacement (saliency ignored).
    UniformRandom,
    /// The k highest-scoring regions.
    Topk,
}

/// How a viewport is rendered around a selected center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ViewportMode {
    /// Gnomonic tangent-plane rendering.
    #[default]
    Tangent,
    /// Axis-aligned crop of ERP pixels.
    ErpCrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Share of regions to select.
    pub fraction: f64,
    pub stride: usize,
    pub region_size: usize,
    pub mean_shift_bandwidth: usize,
    pub mean_shift_iters: usize,
    pub mode: SamplingMode,
    pub viewport_mode: ViewportMode,
    /// Viewport field of view in radians.
    pub fov: f64,
    /// Viewport side length in pixels.
    pub resolution: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            fraction: 0.10,
            stride: 16,
            region_size: 16,
            mean_shift_bandwidth: 8,
            mean_shift_iters: 3,
            mode: SamplingMode::SaliencyWeighted,
            viewport_mode: ViewportMode::Tangent,
            fov: std::f64::consts::FRAC_PI_4,
            resolution: 64,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// Viewport size used by the full-size model.
    pub fn full() -> Self {
        Self {
            resolution: 224,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: String| Err(SamplingError::InvalidConfig(m));
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad(format!("sampler.fraction = {} must be in (0, 1]", self.fraction));
        }
        if self.stride == 0 {
            return bad("sampler.stride must be >= 1".into());
        }
        if self.region_size < self.stride {
            return bad(format!(
                "sampler.region_size = {} must be >= sampler.stride = {}",
                self.region_size, self.stride
            ));
        }
        if self.mean_shift_bandwidth == 0 {
            return bad("sampler.mean_shift_bandwidth must be >= 1".into());
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return bad(format!("sampler.fov = {} must be in (0, pi)", self.fov));
        }
        if self.resolution == 0 {
            return bad("sampler.resolution must be >= 1".into());
        }
        Ok(())
    }
}

/// Everything produced by [`sample_image`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledImage<T> {
    pub viewports: Vec<TangentViewport<T>>,
    /// Selected regions, in selection order (parallel to `viewports`).
    pub regions: Vec<Region<T>>,
    pub n_regions: usize,
    /// No saliency file was given; the luminance-contrast map was used.
    pub baseline_saliency: bool,
    /// Saliency was all zero, so weighted mode fell back to uniform.
    pub uniform_fallback: bool,
}

/// Brings a saliency map onto the image raster.
///
/// Maps with the image's aspect ratio and no larger than it are upscaled
/// bilinearly; anything else is a dimension mismatch.
pub fn align_saliency<T: Real>(img: &ErpImage<T>, map: &SaliencyMap<T>) -> Result<SaliencyMap<T>, SamplingError> {
    let (iw, ih, sw, sh) = (img.width(), img.height(), map.width(), map.height());
    if (iw, ih) == (sw, sh) {
        return Ok(map.clone());
    }
    if sw * ih == sh * iw && sw <= iw && sh <= ih {
        return Ok(map.resized(iw, ih));
    }
    Err(SamplingError::DimensionMismatch {
        image_w: iw,
        image_h: ih,
        saliency_w: sw,
        saliency_h: sh,
    })
}

/// Full sampling pipeline for one image; deterministic given `config.seed`.
///
/// Without a saliency map the luminance-contrast baseline is used.
pub fn sample_image<T: Real>(
    img: &ErpImage<T>,
    saliency: Option<&SaliencyMap<T>>,
    config: &SamplerConfig,
    source_index: usize,
) -> Result<SampledImage<T>, SamplingError> {
    config.validate()?;
    let map = match saliency {
        Some(m) => align_saliency(img, m)?,
        None => baseline_saliency(img),
    };
    let smoothed = mean_shift_filter(&map, config.mean_shift_bandwidth, config.mean_shift_iters);
    let grid = region_scores(&smoothed, config.region_size, config.stride)?;
    let uniform_fallback = config.mode == SamplingMode::SaliencyWeighted && grid.all_zero();
    let picks = select_regions(&grid, config.fraction, config.mode, config.seed)?;

    let fov = T::lit(config.fov);
    let mut viewports = Vec::with_capacity(picks.len());
    let mut regions = Vec::with_capacity(picks.len());
    for i in picks {
        let region = grid.regions[i];
        let center = erp_to_sphere(region.center_row, region.center_col, img.height(), img.width())?;
        let mut vp = extract_viewport(img, center, fov, config.resolution, config.viewport_mode)?;
        vp.source_index = source_index;
        viewports.push(vp);
        regions.push(region);
    }
    Ok(SampledImage {
        viewports,
        regions,
        n_regions: grid.regions.len(),
        baseline_saliency: saliency.is_none(),
        uniform_fallback,
    })
}
