//! Spherical geometry: equirectangular pixel coordinates and the gnomonic
//! (tangent-plane) projection used to render viewports.
//!
//! Pixel coordinates are continuous and place pixel centers on integers, so
//! `row = 0.0` is the center of the first row. Row 0 is nearest the north pole
//! and longitude increases with column.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

/// Points with `cos c` at or below this are treated as behind the tangent plane.
pub const HEMISPHERE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel coordinate ({row}, {col}) outside a {height}x{width} image")]
    OutOfRange {
        row: f64,
        col: f64,
        height: usize,
        width: usize,
    },
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyImage { height: usize, width: usize },
    #[error("point is behind the tangent plane (cos c = {cos_c})")]
    BehindTangentPlane { cos_c: f64 },
    #[error("field of view {0} must lie strictly between 0 and pi")]
    InvalidFov(f64),
    #[error("tangent plane resolution must be at least 1")]
    ZeroResolution,
    #[error("latitude {0} outside [-pi/2, pi/2]")]
    InvalidLatitude(f64),
}

/// Latitude/longitude on the unit sphere, in radians.
///
/// Longitude is kept in `[-pi, pi)`; latitude in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint<T> {
    pub lat: T,
    pub lon: T,
}

impl<T: Real> SphericalPoint<T> {
    /// Builds a point, wrapping longitude into `[-pi, pi)`.
    pub fn new(lat: T, lon: T) -> Result<Self, GeometryError> {
        let half_pi = T::FRAC_PI_2();
        if !lat.is_finite() || lat < -half_pi || lat > half_pi {
            return Err(GeometryError::InvalidLatitude(lat.to_f64_lossy()));
        }
        Ok(Self {
            lat,
            lon: wrap_longitude(lon),
        })
    }

    pub fn origin() -> Self {
        Self {
            lat: T::zero(),
            lon: T::zero(),
        }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_longitude<T: Real>(lon: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = (lon + T::PI()) % two_pi;
    if w < T::zero() {
        w += two_pi;
    }
    let out = w - T::PI();
    // `%` can land exactly on +pi after rounding
    if out >= T::PI() {
        out - two_pi
    } else {
        out
    }
}

/// Coordinates on a tangent plane, in units of the sphere radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint<T> {
    pub x: T,
    pub y: T,
}

/// Geometry of a square tangent viewport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentPlaneSpec<T> {
    pub center: SphericalPoint<T>,
    /// Full field of view in radians, identical horizontally and vertically.
    pub fov: T,
    pub resolution: usize,
}

impl<T: Real> TangentPlaneSpec<T> {
    pub fn new(center: SphericalPoint<T>, fov: T, resolution: usize) -> Result<Self, GeometryError> {
        if !(fov > T::zero() && fov < T::PI()) {
            return Err(GeometryError::InvalidFov(fov.to_f64_lossy()));
        }
        if resolution == 0 {
            return Err(GeometryError::ZeroResolution);
        }
        Ok(Self {
            center,
            fov,
            resolution,
        })
    }

    /// Half-width of the plane, `tan(fov / 2)`.
    pub fn half_extent(&self) -> T {
        (self.fov / T::lit(2.0)).tan()
    }
}

/// Maps a continuous ERP pixel position to the sphere.
///
/// Rows are accepted over the full pixel extent `[-0.5, height - 0.5]`, which
/// maps exactly onto `[-pi/2, pi/2]`; columns over `[0, width)`.
pub fn erp_to_sphere<T: Real>(row: T, col: T, height: usize, width: usize) -> Result<SphericalPoint<T>, GeometryError> {
    if height == 0 || width == 0 {
        return Err(GeometryError::EmptyImage { height, width });
    }
    let h = T::of_usize(height);
    let w = T::of_usize(width);
    let half = T::lit(0.5);
    if !(row >= -half && row <= h - half && col >= T::zero() && col < w) {
        return Err(GeometryError::OutOfRange {
            row: row.to_f64_lossy(),
            col: col.to_f64_lossy(),
            height,
            width,
        });
    }
    let lat = T::PI() * (half - (row + half) / h);
    let lon = (T::PI() + T::PI()) * ((col + half) / w - half);
    Ok(SphericalPoint {
        lat,
        lon: wrap_longitude(lon),
    })
}

/// Inverse of [`erp_to_sphere`]; returns fractional `(row, col)` with the
/// column wrapped into `[0, width)`.
pub fn sphere_to_erp<T: Real>(p: SphericalPoint<T>, height: usize, width: usize) -> (T, T) {
    let h = T::of_usize(height);
    let w = T::of_usize(width);
    let half = T::lit(0.5);
    let row = (half - p.lat / T::PI()) * h - half;
    let mut col = (p.lon / (T::PI() + T::PI()) + half) * w - half;
    if col < T::zero() {
        col += w;
    }
    if col >= w {
        col -= w;
    }
    (row, col)
}

/// Gnomonic projection of `p` onto the plane tangent at `center`.
pub fn gnomonic_forward<T: Real>(
    center: SphericalPoint<T>,
    p: SphericalPoint<T>,
) -> Result<PlanePoint<T>, GeometryError> {
    let (sin0, cos0) = center.lat.sin_cos();
    let (sin_lat, cos_lat) = p.lat.sin_cos();
    let (sin_dl, cos_dl) = (p.lon - center.lon).sin_cos();
    let cos_c = sin0 * sin_lat + cos0 * cos_lat * cos_dl;
    if !(cos_c > T::lit(HEMISPHERE_EPS)) {
        return Err(GeometryError::BehindTangentPlane {
            cos_c: cos_c.to_f64_lossy(),
        });
    }
    Ok(PlanePoint {
        x: cos_lat * sin_dl / cos_c,
        y: (cos0 * sin_lat - sin0 * cos_lat * cos_dl) / cos_c,
    })
}

/// Inverse gnomonic projection; total on the plane.
pub fn gnomonic_inverse<T: Real>(center: SphericalPoint<T>, q: PlanePoint<T>) -> SphericalPoint<T> {
    let rho = q.x.hypot(q.y);
    if rho == T::zero() {
        return center;
    }
    let c = rho.atan();
    let (sin_c, cos_c) = c.sin_cos();
    let (sin0, cos0) = center.lat.sin_cos();
    let sin_lat = (cos_c * sin0 + q.y * sin_c * cos0 / rho).max(-T::one()).min(T::one());
    let lat = sin_lat.asin();
    let lon = center.lon + (q.x * sin_c).atan2(rho * cos0 * cos_c - q.y * sin0 * sin_c);
    SphericalPoint {
        lat,
        lon: wrap_longitude(lon),
    }
}

/// Plane coordinate of pixel center `index` along one axis of a grid of
/// `resolution` cells spanning `[-extent, extent]`.
fn plane_coord<T: Real>(index: usize, resolution: usize, extent: T) -> T {
    let two = T::lit(2.0);
    extent * (two * (T::of_usize(index) + T::lit(0.5)) / T::of_usize(resolution) - T::one())
}

/// Plane coordinates of every viewport pixel center, row-major, top row at `+y`.
pub fn plane_grid<T: Real>(spec: &TangentPlaneSpec<T>) -> Vec<PlanePoint<T>> {
    let n = spec.resolution;
    let t = spec.half_extent();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let y = -plane_coord(i, n, t);
        for j in 0..n {
            out.push(PlanePoint {
                x: plane_coord(j, n, t),
                y,
            });
        }
    }
    out
}

/// Spherical position of every viewport pixel, row-major, top row at `+y`.
pub fn tangent_grid<T: Real>(spec: &TangentPlaneSpec<T>) -> Vec<SphericalPoint<T>> {
    plane_grid(spec)
        .into_iter()
        .map(|q| gnomonic_inverse(spec.center, q))
        .collect()
}
