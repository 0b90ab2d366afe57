use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageio::SaliencyMap;
use crate::sampling::{SamplingError, SamplingMode};
use crate::sphere::{erp_to_sphere, SphericalPoint};
use crate::Real;

/// A square region of the saliency raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region<T> {
    /// Top-left pixel.
    pub row: usize,
    pub col: usize,
    /// Geometric center in continuous pixel coordinates (wrapped column).
    pub center_row: T,
    pub center_col: T,
    pub mean_saliency: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrid<T> {
    pub region_size: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major by top-left corner.
    pub regions: Vec<Region<T>>,
}

impl<T: Real> RegionGrid<T> {
    pub fn all_zero(&self) -> bool {
        self.regions.iter().all(|r| r.mean_saliency == T::zero())
    }
}

/// Number of regions on a `height x width` raster.
///
/// Rows: top edges at multiples of `stride` while the region fits,
/// `floor((height - size) / stride) + 1`. Columns: left edges at every multiple
/// of `stride` below `width`, wrapping past the seam, `ceil(width / stride)`.
pub fn region_count(height: usize, width: usize, region_size: usize, stride: usize) -> usize {
    if region_size > height || stride == 0 {
        return 0;
    }
    ((height - region_size) / stride + 1) * width.div_ceil(stride)
}

/// Mean saliency of every strided region.
pub fn region_scores<T: Real>(
    map: &SaliencyMap<T>,
    region_size: usize,
    stride: usize,
) -> Result<RegionGrid<T>, SamplingError> {
    let (h, w) = (map.height(), map.width());
    if region_size > h {
        return Err(SamplingError::RegionTooTall {
            region: region_size,
            height: h,
        });
    }
    if stride == 0 || region_size == 0 {
        return Err(SamplingError::InvalidConfig(
            "stride and region size must be positive".into(),
        ));
    }
    let area = T::of_usize(region_size * region_size);
    let half = T::lit((region_size as f64 - 1.0) / 2.0);
    let wf = T::of_usize(w);
    let mut regions = Vec::with_capacity(region_count(h, w, region_size, stride));
    for row in (0..=h - region_size).step_by(stride) {
        for col in (0..w).step_by(stride) {
            let mut acc = T::zero();
            for r in row..row + region_size {
                for dc in 0..region_size {
                    acc += map.get(r, (col + dc) % w);
                }
            }
            let mut center_col = T::of_usize(col) + half;
            if center_col >= wf {
                center_col -= wf;
            }
            regions.push(Region {
                row,
                col,
                center_row: T::of_usize(row) + half,
                center_col,
                mean_saliency: acc / area,
            });
        }
    }
    Ok(RegionGrid {
        region_size,
        stride,
        height: h,
        width: w,
        regions,
    })
}

/// `max(1, round(fraction * n))`, capped at `n`.
pub fn selection_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Indices of the selected regions, in selection order.
///
/// Weighted mode uses exponential keys `ln(u) / w` (equivalent to
/// `u^(1/w)`) and keeps the k largest, which is weighted sampling without
/// replacement. Zero-weight regions are only drawn once positive ones run out.
/// An all-zero grid falls back to uniform sampling.
pub fn select_regions<T: Real>(
    grid: &RegionGrid<T>,
    fraction: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<usize>, SamplingError> {
    let n = grid.regions.len();
    if n == 0 {
        return Err(SamplingError::EmptyGrid);
    }
    let k = selection_size(n, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = if mode == SamplingMode::SaliencyWeighted && grid.all_zero() {
        SamplingMode::UniformRandom
    } else {
        mode
    };

    let mut order: Vec<usize> = (0..n).collect();
    match mode {
        SamplingMode::Topk => {
            // stable sort keeps row-major order among ties
            order.sort_by(|a, b| {
                grid.regions[*b]
                    .mean_saliency
                    .partial_cmp(&grid.regions[*a].mean_saliency)
                    .unwrap_or(Ordering::Equal)
            });
        }
        SamplingMode::UniformRandom | SamplingMode::SaliencyWeighted => {
            let weighted = mode == SamplingMode::SaliencyWeighted;
            let keys: Vec<(f64, f64)> = grid
                .regions
                .iter()
                .map(|r| {
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    let tie: f64 = rng.gen();
                    let w = r.mean_saliency.to_f64_lossy();
                    let key = if !weighted {
                        u.ln()
                    } else if w > 0.0 {
                        u.ln() / w
                    } else {
                        f64::NEG_INFINITY
                    };
                    (key, tie)
                })
                .collect();
            order.sort_by(|a, b| {
                let (ka, ta) = keys[*a];
                let (kb, tb) = keys[*b];
                kb.partial_cmp(&ka)
                    .unwrap_or(Ordering::Equal)
                    .then(tb.partial_cmp(&ta).unwrap_or(Ordering::Equal))
            });
        }
    }
    order.truncate(k);
    Ok(order)
}

/// Spherical centers of the selected regions.
pub fn sample_regions<T: Real>(
    grid: &RegionGrid<T>,
    fraction: f64,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<SphericalPoint<T>>, SamplingError> {
    select_regions(grid, fraction, mode, seed)?
        .into_iter()
        .map(|i| {
            let r = &grid.regions[i];
            erp_to_sphere(r.center_row, r.center_col, grid.height, grid.width).map_err(Into::into)
        })
        .collect()
}
