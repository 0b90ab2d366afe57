//! Row-major dense kernels with hand-written backward passes.

use serde::{Deserialize, Serialize};

use crate::Real;

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `y = x wᵀ + b` for `x: n × d_in`, `w: d_out × d_in`.
pub(crate) fn linear<T: Real>(x: &[T], n: usize, d_in: usize, w: &[T], b: &[T], d_out: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), n * d_in);
    debug_assert_eq!(w.len(), d_out * d_in);
    let mut y = Vec::with_capacity(n * d_out);
    for row in x.chunks_exact(d_in) {
        for (o, w_o) in w.chunks_exact(d_in).enumerate() {
            y.push(b[o] + dot(row, w_o));
        }
    }
    y
}

/// Accumulates weight/bias gradients of [`linear`] and, when asked, the
/// input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Real>(
    dy: &[T],
    x: &[T],
    n: usize,
    d_in: usize,
    w: &[T],
    d_out: usize,
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    for i in 0..n {
        let dy_i = &dy[i * d_out..(i + 1) * d_out];
        let x_i = &x[i * d_in..(i + 1) * d_in];
        for (o, g) in dy_i.iter().enumerate() {
            if *g != T::zero() {
                axpy(*g, x_i, &mut dw[o * d_in..(o + 1) * d_in]);
                db[o] += *g;
            }
        }
    }
    if let Some(dx) = dx {
        for i in 0..n {
            let dy_i = &dy[i * d_out..(i + 1) * d_out];
            let dx_i = &mut dx[i * d_in..(i + 1) * d_in];
            for (o, g) in dy_i.iter().enumerate() {
                if *g != T::zero() {
                    axpy(*g, &w[o * d_in..(o + 1) * d_in], dx_i);
                }
            }
        }
    }
}

/// Per-row layer normalization; returns `(y, xhat, inv_std)`.
pub(crate) fn layer_norm<T: Real>(x: &[T], d: usize, gamma: &[T], beta: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = x.len() / d;
    let df = T::of_usize(d);
    let eps = T::lit(LN_EPS);
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(n);
    for row in x.chunks_exact(d) {
        let mean = row.iter().copied().sum::<T>() / df;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / df;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (k, v) in row.iter().enumerate() {
            let h = (*v - mean) * is;
            xhat.push(h);
            y.push(h * gamma[k] + beta[k]);
        }
    }
    (y, xhat, inv_std)
}

/// Backward of [`layer_norm`]; accumulates into `dx`, `dgamma`, `dbeta`.
pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    d: usize,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
    dx: &mut [T],
) {
    let df = T::of_usize(d);
    let mut dxhat = vec![T::zero(); d];
    for (i, is) in inv_std.iter().enumerate() {
        let dy_i = &dy[i * d..(i + 1) * d];
        let xh_i = &xhat[i * d..(i + 1) * d];
        let mut sum = T::zero();
        let mut sum_xh = T::zero();
        for k in 0..d {
            dgamma[k] += dy_i[k] * xh_i[k];
            dbeta[k] += dy_i[k];
            dxhat[k] = dy_i[k] * gamma[k];
            sum += dxhat[k];
            sum_xh += dxhat[k] * xh_i[k];
        }
        let dx_i = &mut dx[i * d..(i + 1) * d];
        for k in 0..d {
            dx_i[k] += *is / df * (df * dxhat[k] - sum - xh_i[k] * sum_xh);
        }
    }
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Tanh approximation of the Gaussian error linear unit.
    #[default]
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Gelu => {
                let c = T::lit(0.797_884_560_802_865_4);
                let inner = c * (x + T::lit(0.044715) * x * x * x);
                T::lit(0.5) * x * (T::one() + inner.tanh())
            }
        }
    }

    /// Derivative; the rectifier uses 0 at the kink.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Gelu => {
                let c = T::lit(0.797_884_560_802_865_4);
                let a = T::lit(0.044715);
                let inner = c * (x + a * x * x * x);
                let t = inner.tanh();
                let half = T::lit(0.5);
                half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
            }
        }
    }
}

/// Softmax over each row of length `n`, in place.
pub(crate) fn softmax_rows<T: Real>(s: &mut [T], n: usize) {
    for row in s.chunks_exact_mut(n) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Gathers 3×3 neighbourhoods (zero padded) of `imgs: count × side × side × c`
/// into rows of length `9c`, ordered `[ky][kx][c]`.
pub(crate) fn im2col3<T: Real>(imgs: &[T], count: usize, side: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut cols = vec![T::zero(); count * side * side * k];
    for p in 0..count {
        let img = &imgs[p * side * side * c..(p + 1) * side * side * c];
        for y in 0..side {
            for x in 0..side {
                let row = &mut cols[((p * side + y) * side + x) * k..][..k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= side as isize {
                            continue;
                        }
                        let src = &img[(sy as usize * side + sx as usize) * c..][..c];
                        row[(ky * 3 + kx) * c..][..c].copy_from_slice(src);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`].
pub(crate) fn col2im3<T: Real>(dcols: &[T], count: usize, side: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut out = vec![T::zero(); count * side * side * c];
    for p in 0..count {
        for y in 0..side {
            for x in 0..side {
                let row = &dcols[((p * side + y) * side + x) * k..][..k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= side as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= side as isize {
                            continue;
                        }
                        let dst = &mut out[((p * side + sy as usize) * side + sx as usize) * c..][..c];
                        for (d, s) in dst.iter_mut().zip(&row[(ky * 3 + kx) * c..][..c]) {
                            *d += *s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2×2 average pooling of `count × side × side × c`.
pub(crate) fn avg_pool2<T: Real>(x: &[T], count: usize, side: usize, c: usize) -> Vec<T> {
    let half = side / 2;
    let quarter = T::lit(0.25);
    let mut out = vec![T::zero(); count * half * half * c];
    for p in 0..count {
        for y in 0..half {
            for xx in 0..half {
                let dst = &mut out[((p * half + y) * half + xx) * c..][..c];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let src = &x[((p * side + 2 * y + dy) * side + 2 * xx + dx) * c..][..c];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += *s * quarter;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward<T: Real>(dy: &[T], count: usize, side: usize, c: usize) -> Vec<T> {
    let half = side / 2;
    let quarter = T::lit(0.25);
    let mut dx = vec![T::zero(); count * side * side * c];
    for p in 0..count {
        for y in 0..half {
            for xx in 0..half {
                let src = &dy[((p * half + y) * half + xx) * c..][..c];
                for (oy, ox) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let dst = &mut dx[((p * side + 2 * y + oy) * side + 2 * xx + ox) * c..][..c];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += *s * quarter;
                    }
                }
            }
        }
    }
    dx
}
