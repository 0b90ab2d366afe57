use crate::imageio::ImageError;
use crate::Real;

/// Side length of the box blur used by [`baseline_saliency`].
pub const BASELINE_BLUR_SIZE: usize = 9;

/// Equirectangular RGB image with interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> ErpImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster);
        }
        if data.len() != width * height * 3 {
            return Err(ImageError::DataLength {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        if let Some(v) = data
            .iter()
            .find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one()))
        {
            return Err(ImageError::ValueOutOfRange(v.to_f64_lossy()));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, rgb: [T; 3]) -> Result<Self, ImageError> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [T; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Non-fatal note when the raster is not 2:1.
    pub fn aspect_warning(&self) -> Option<String> {
        (self.width != 2 * self.height).then(|| {
            format!(
                "equirectangular image is {}x{}, expected width = 2 * height",
                self.width, self.height
            )
        })
    }

    /// Rec. 601 luma of every pixel.
    pub fn luminance(&self) -> Vec<T> {
        let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
        self.data
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect()
    }

    /// Circularly shifts columns right by `shift`.
    pub fn roll_columns(&self, shift: usize) -> Self {
        let w = self.width;
        Self::from_fn(w, self.height, |r, c| self.pixel(r, (c + w - shift % w) % w))
            .expect("rolled image keeps valid values")
    }
}

/// Single-channel non-negative saliency raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> SaliencyMap<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyRaster);
        }
        if data.len() != width * height {
            return Err(ImageError::DataLength {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
            return Err(ImageError::NegativeSaliency(v.to_f64_lossy()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::zero(), T::max)
    }

    pub fn total(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|v| *v == T::zero())
    }

    /// Scales values so the maximum is 1; all-zero maps are returned as-is.
    pub fn normalized(&self) -> Self {
        let m = self.max_value();
        if m == T::zero() {
            return self.clone();
        }
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| *v / m).collect(),
        }
    }

    /// Bilinear resize with the same pixel-center alignment as the ERP mapping.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sy = T::of_usize(self.height) / T::of_usize(height);
        let sx = T::of_usize(self.width) / T::of_usize(width);
        let half = T::lit(0.5);
        let mut data = Vec::with_capacity(width * height);
        let mut out = [T::zero()];
        for r in 0..height {
            let src_r = (T::of_usize(r) + half) * sy - half;
            for c in 0..width {
                let src_c = (T::of_usize(c) + half) * sx - half;
                sample_channels(&self.data, self.height, self.width, 1, src_r, src_c, &mut out);
                data.push(out[0].max(T::zero()));
            }
        }
        Self { width, height, data }
    }
}

/// Bilinear interpolation over pixel centers with longitude wraparound and
/// latitude clamping, writing `channels` values into `out`.
pub(crate) fn sample_channels<T: Real>(
    data: &[T],
    height: usize,
    width: usize,
    channels: usize,
    row: T,
    col: T,
    out: &mut [T],
) {
    let max_row = T::of_usize(height - 1);
    let row = row.max(T::zero()).min(max_row);
    let r0f = row.floor();
    let fr = row - r0f;
    let r0 = r0f.to_usize().unwrap_or(0);
    let r1 = (r0 + 1).min(height - 1);

    let w = T::of_usize(width);
    let mut col = col % w;
    if col < T::zero() {
        col += w;
    }
    let c0f = col.floor();
    let fc = col - c0f;
    let c0 = c0f.to_usize().unwrap_or(0) % width;
    let c1 = (c0 + 1) % width;

    let one = T::one();
    let w00 = (one - fr) * (one - fc);
    let w01 = (one - fr) * fc;
    let w10 = fr * (one - fc);
    let w11 = fr * fc;
    for (k, o) in out.iter_mut().enumerate().take(channels) {
        let at = |r: usize, c: usize| data[(r * width + c) * channels + k];
        *o = w00 * at(r0, c0) + w01 * at(r0, c1) + w10 * at(r1, c0) + w11 * at(r1, c1);
    }
}

/// Bilinear RGB lookup at a continuous pixel position.
///
/// Columns wrap modulo the width; rows clamp to `[0, height - 1]`.
pub fn bilinear_sample<T: Real>(img: &ErpImage<T>, row: T, col: T) -> [T; 3] {
    let mut out = [T::zero(); 3];
    sample_channels(&img.data, img.height, img.width, 3, row, col, &mut out);
    out
}

/// Local luminance contrast: `|Y - box9(Y)|` per pixel.
///
/// The blur wraps columns and averages only over in-bounds rows.
pub fn baseline_saliency<T: Real>(img: &ErpImage<T>) -> SaliencyMap<T> {
    let (w, h) = (img.width, img.height);
    let luma = img.luminance();
    let r = (BASELINE_BLUR_SIZE / 2) as isize;

    // horizontal pass (wrapping), then vertical pass (truncated)
    let mut horiz = vec![T::zero(); w * h];
    for row in 0..h {
        for col in 0..w {
            let mut acc = T::zero();
            for dc in -r..=r {
                let c = (col as isize + dc).rem_euclid(w as isize) as usize;
                acc += luma[row * w + c];
            }
            horiz[row * w + col] = acc / T::of_usize(BASELINE_BLUR_SIZE);
        }
    }
    let mut data = Vec::with_capacity(w * h);
    for row in 0..h {
        let lo = (row as isize - r).max(0) as usize;
        let hi = ((row as isize + r) as usize).min(h - 1);
        for col in 0..w {
            let mut acc = T::zero();
            for rr in lo..=hi {
                acc += horiz[rr * w + col];
            }
            let blurred = acc / T::of_usize(hi - lo + 1);
            data.push((luma[row * w + col] - blurred).abs().max(T::zero()));
        }
    }
    SaliencyMap {
        width: w,
        height: h,
        data,
    }
}
