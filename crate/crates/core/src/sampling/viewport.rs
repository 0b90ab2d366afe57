use crate::imageio::{bilinear_sample, ErpImage};
use crate::sampling::{SamplingError, ViewportMode};
use crate::sphere::{sphere_to_erp, tangent_grid, SphericalPoint, TangentPlaneSpec};
use crate::Real;

/// A square RGB viewport rendered around a spherical center.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentViewport<T> {
    /// Row-major interleaved RGB, `resolution * resolution * 3` values.
    pub pixels: Vec<T>,
    pub resolution: usize,
    pub center: SphericalPoint<T>,
    pub spec: TangentPlaneSpec<T>,
    /// Index of the ERP image the viewport came from.
    pub source_index: usize,
}

impl<T: Real> TangentViewport<T> {
    pub fn pixel(&self, row: usize, col: usize) -> [T; 3] {
        let i = (row * self.resolution + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_image(&self) -> ErpImage<T> {
        ErpImage::new(self.resolution, self.resolution, self.pixels.clone())
            .expect("viewport pixels are interpolated from a valid image")
    }
}

/// Renders the viewport centered at `center`.
///
/// Tangent mode samples the ERP image at the gnomonic grid; crop mode takes a
/// `resolution x resolution` block of ERP pixels around the center (columns
/// wrap, rows clamp).
pub fn extract_viewport<T: Real>(
    img: &ErpImage<T>,
    center: SphericalPoint<T>,
    fov: T,
    resolution: usize,
    mode: ViewportMode,
) -> Result<TangentViewport<T>, SamplingError> {
    let spec = TangentPlaneSpec::new(center, fov, resolution)?;
    let (h, w) = (img.height(), img.width());
    let mut pixels = Vec::with_capacity(resolution * resolution * 3);
    match mode {
        ViewportMode::Tangent => {
            for p in tangent_grid(&spec) {
                let (r, c) = sphere_to_erp(p, h, w);
                pixels.extend_from_slice(&bilinear_sample(img, r, c));
            }
        }
        ViewportMode::ErpCrop => {
            let (r0, c0) = sphere_to_erp(center, h, w);
            let offset = T::lit((resolution as f64 - 1.0) / 2.0);
            for i in 0..resolution {
                for j in 0..resolution {
                    let r = r0 - offset + T::of_usize(i);
                    let c = c0 - offset + T::of_usize(j);
                    pixels.extend_from_slice(&bilinear_sample(img, r, c));
                }
            }
        }
    }
    // interpolation of [0,1] data can overshoot by rounding only
    for v in &mut pixels {
        *v = v.max(T::zero()).min(T::one());
    }
    Ok(TangentViewport {
        pixels,
        resolution,
        center,
        spec,
        source_index: 0,
    })
}
