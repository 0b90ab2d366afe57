use crate::model::config::{ModelConfig, CONV1_CHANNELS, CONV2_CHANNELS};
use crate::model::ops::{
    avg_pool2, avg_pool2_backward, col2im3, im2col3, layer_norm, layer_norm_backward, linear, linear_backward,
    softmax_rows,
};
use crate::model::params::{EncoderParams, LayerParams, ModelParams};
use crate::model::ModelError;
use crate::sampling::TangentViewport;
use crate::sphere::SphericalPoint;
use crate::Real;

/// Token matrix with the CLS token in row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence<T> {
    /// `(n_patches + 1) × dim`, row-major.
    pub tokens: Vec<T>,
    pub n_patches: usize,
    pub dim: usize,
}

impl<T: Real> TokenSequence<T> {
    pub fn rows(&self) -> usize {
        self.n_patches + 1
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.tokens[i * self.dim..(i + 1) * self.dim]
    }
}

/// Splits a `resolution × resolution` RGB raster into non-overlapping
/// `patch × patch` tiles, row-major; each tile is row-major RGB.
pub fn patchify<T: Real>(pixels: &[T], resolution: usize, patch: usize) -> Result<Vec<Vec<T>>, ModelError> {
    if patch == 0 || resolution % patch != 0 {
        return Err(ModelError::IndivisibleResolution { resolution, patch });
    }
    if pixels.len() != resolution * resolution * 3 {
        return Err(ModelError::Shape(format!(
            "viewport has {} values, expected {}",
            pixels.len(),
            resolution * resolution * 3
        )));
    }
    let per_side = resolution / patch;
    let mut out = Vec::with_capacity(per_side * per_side);
    for py in 0..per_side {
        for px in 0..per_side {
            let mut tile = Vec::with_capacity(patch * patch * 3);
            for r in 0..patch {
                let start = ((py * patch + r) * resolution + px * patch) * 3;
                tile.extend_from_slice(&pixels[start..start + patch * 3]);
            }
            out.push(tile);
        }
    }
    Ok(out)
}

enum EncoderCache<T> {
    Linear {
        input: Vec<T>,
    },
    Conv {
        cols1: Vec<T>,
        pre1: Vec<T>,
        cols2: Vec<T>,
        pre2: Vec<T>,
        features: Vec<T>,
    },
}

fn encode_cached<T: Real>(
    patches: &[T],
    count: usize,
    params: &ModelParams<T>,
) -> Result<(Vec<T>, EncoderCache<T>), ModelError> {
    let cfg = &params.config;
    let d = cfg.dim;
    if patches.len() != count * cfg.patch_len() {
        return Err(ModelError::Shape(format!(
            "{} patch values for {count} patches of length {}",
            patches.len(),
            cfg.patch_len()
        )));
    }
    match &params.encoder {
        EncoderParams::Linear { w, b } => {
            let tokens = linear(patches, count, cfg.patch_len(), w, b, d);
            Ok((
                tokens,
                EncoderCache::Linear {
                    input: patches.to_vec(),
                },
            ))
        }
        EncoderParams::Conv {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            proj_w,
            proj_b,
        } => {
            let act = cfg.activation;
            let s = cfg.patch_size;
            let cols1 = im2col3(patches, count, s, 3);
            let pre1 = linear(&cols1, count * s * s, 27, conv1_w, conv1_b, CONV1_CHANNELS);
            let act1: Vec<T> = pre1.iter().map(|v| act.apply(*v)).collect();
            let pool1 = avg_pool2(&act1, count, s, CONV1_CHANNELS);
            let h = s / 2;
            let cols2 = im2col3(&pool1, count, h, CONV1_CHANNELS);
            let pre2 = linear(
                &cols2,
                count * h * h,
                9 * CONV1_CHANNELS,
                conv2_w,
                conv2_b,
                CONV2_CHANNELS,
            );
            let act2: Vec<T> = pre2.iter().map(|v| act.apply(*v)).collect();
            let features = avg_pool2(&act2, count, h, CONV2_CHANNELS);
            let tokens = linear(&features, count, cfg.conv_features(), proj_w, proj_b, d);
            Ok((
                tokens,
                EncoderCache::Conv {
                    cols1,
                    pre1,
                    cols2,
                    pre2,
                    features,
                },
            ))
        }
    }
}

/// Maps each patch to a `dim`-wide token; returns `patches.len() × dim`.
pub fn encode_patches<T: Real>(patches: &[Vec<T>], params: &ModelParams<T>) -> Result<Vec<T>, ModelError> {
    let flat: Vec<T> = patches.iter().flatten().copied().collect();
    Ok(encode_cached(&flat, patches.len(), params)?.0)
}

/// `(lat / (pi/2), lon / pi)`.
fn normalized_center<T: Real>(center: SphericalPoint<T>) -> [T; 2] {
    [center.lat / T::FRAC_PI_2(), center.lon / T::PI()]
}

/// Adds positional, geometric and source terms to every patch token and
/// prepends the (unmodified) CLS token.
pub fn add_embeddings<T: Real>(
    tokens: &[T],
    center: SphericalPoint<T>,
    source_index: usize,
    params: &ModelParams<T>,
) -> Result<TokenSequence<T>, ModelError> {
    let cfg = &params.config;
    let d = cfg.dim;
    if tokens.len() % d != 0 {
        return Err(ModelError::Shape(format!(
            "{} token values not a multiple of dim {d}",
            tokens.len()
        )));
    }
    let n = tokens.len() / d;
    if n > cfg.max_patches {
        return Err(ModelError::TooManyPatches {
            patches: n,
            max: cfg.max_patches,
        });
    }
    if source_index > cfg.n_sources {
        return Err(ModelError::BadSourceIndex {
            index: source_index,
            rows: cfg.n_sources + 1,
        });
    }
    // terms shared by every patch token of this viewport
    let mut shared = vec![T::zero(); d];
    if cfg.geometric_embedding {
        let g = normalized_center(center);
        for (k, s) in shared.iter_mut().enumerate() {
            *s += params.geometric[2 * k] * g[0] + params.geometric[2 * k + 1] * g[1];
        }
    }
    if cfg.source_embedding {
        for (s, v) in shared
            .iter_mut()
            .zip(&params.source[source_index * d..(source_index + 1) * d])
        {
            *s += *v;
        }
    }
    let mut out = Vec::with_capacity((n + 1) * d);
    out.extend_from_slice(&params.cls);
    for (i, tok) in tokens.chunks_exact(d).enumerate() {
        let pos = &params.positional[i * d..(i + 1) * d];
        out.extend(tok.iter().zip(pos).zip(&shared).map(|((t, p), s)| *t + *p + *s));
    }
    Ok(TokenSequence {
        tokens: out,
        n_patches: n,
        dim: d,
    })
}

struct LayerCache<T> {
    ln1_xhat: Vec<T>,
    ln1_inv: Vec<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads × n × n`
    attn: Vec<T>,
    ctx: Vec<T>,
    ln2_xhat: Vec<T>,
    ln2_inv: Vec<T>,
    h2: Vec<T>,
    pre: Vec<T>,
    act: Vec<T>,
}

fn check_finite<T: Real>(v: &[T], stage: &'static str) -> Result<(), ModelError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NumericOverflow(stage))
    }
}

fn layer_forward<T: Real>(x: &mut [T], n: usize, p: &LayerParams<T>, cfg: &ModelConfig) -> LayerCache<T> {
    let d = cfg.dim;
    let (heads, hd) = (cfg.heads, cfg.head_dim());
    let scale = T::one() / T::of_usize(hd).sqrt();

    let (h1, ln1_xhat, ln1_inv) = layer_norm(x, d, &p.ln1_g, &p.ln1_b);
    let q = linear(&h1, n, d, &p.wq, &p.bq, d);
    let k = linear(&h1, n, d, &p.wk, &p.bk, d);
    let v = linear(&h1, n, d, &p.wv, &p.bv, d);
    let mut attn = vec![T::zero(); heads * n * n];
    let mut ctx = vec![T::zero(); n * d];
    for h in 0..heads {
        let off = h * hd;
        let a = &mut attn[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let qi = &q[i * d + off..i * d + off + hd];
            for j in 0..n {
                let kj = &k[j * d + off..j * d + off + hd];
                a[i * n + j] = crate::model::ops::dot(qi, kj) * scale;
            }
        }
        softmax_rows(a, n);
        for i in 0..n {
            let ci = &mut ctx[i * d + off..i * d + off + hd];
            for j in 0..n {
                let w = a[i * n + j];
                for (c, vv) in ci.iter_mut().zip(&v[j * d + off..j * d + off + hd]) {
                    *c += w * *vv;
                }
            }
        }
    }
    let o = linear(&ctx, n, d, &p.wo, &p.bo, d);
    for (xi, oi) in x.iter_mut().zip(&o) {
        *xi += *oi;
    }
    let (h2, ln2_xhat, ln2_inv) = layer_norm(x, d, &p.ln2_g, &p.ln2_b);
    let pre = linear(&h2, n, d, &p.w1, &p.b1, cfg.mlp_dim);
    let act: Vec<T> = pre.iter().map(|u| cfg.activation.apply(*u)).collect();
    let m = linear(&act, n, cfg.mlp_dim, &p.w2, &p.b2, d);
    for (xi, mi) in x.iter_mut().zip(&m) {
        *xi += *mi;
    }
    LayerCache {
        ln1_xhat,
        ln1_inv,
        h1,
        q,
        k,
        v,
        attn,
        ctx,
        ln2_xhat,
        ln2_inv,
        h2,
        pre,
        act,
    }
}

/// Returns the gradient with respect to the layer input.
fn layer_backward<T: Real>(
    dx_out: &[T],
    n: usize,
    c: &LayerCache<T>,
    p: &LayerParams<T>,
    g: &mut LayerParams<T>,
    cfg: &ModelConfig,
) -> Vec<T> {
    let d = cfg.dim;
    let m = cfg.mlp_dim;
    let (heads, hd) = (cfg.heads, cfg.head_dim());
    let scale = T::one() / T::of_usize(hd).sqrt();

    // x_out = x_mid + mlp(ln2(x_mid))
    let mut dx_mid = dx_out.to_vec();
    let mut dact = vec![T::zero(); n * m];
    linear_backward(dx_out, &c.act, n, m, &p.w2, d, &mut g.w2, &mut g.b2, Some(&mut dact));
    for (da, u) in dact.iter_mut().zip(&c.pre) {
        *da *= cfg.activation.derivative(*u);
    }
    let mut dh2 = vec![T::zero(); n * d];
    linear_backward(&dact, &c.h2, n, d, &p.w1, m, &mut g.w1, &mut g.b1, Some(&mut dh2));
    layer_norm_backward(
        &dh2,
        &c.ln2_xhat,
        &c.ln2_inv,
        d,
        &p.ln2_g,
        &mut g.ln2_g,
        &mut g.ln2_b,
        &mut dx_mid,
    );

    // x_mid = x_in + attn(ln1(x_in))
    let mut dx_in = dx_mid.clone();
    let mut dctx = vec![T::zero(); n * d];
    linear_backward(&dx_mid, &c.ctx, n, d, &p.wo, d, &mut g.wo, &mut g.bo, Some(&mut dctx));
    let mut dq = vec![T::zero(); n * d];
    let mut dk = vec![T::zero(); n * d];
    let mut dv = vec![T::zero(); n * d];
    let mut ds = vec![T::zero(); n];
    for h in 0..heads {
        let off = h * hd;
        let a = &c.attn[h * n * n..(h + 1) * n * n];
        for i in 0..n {
            let dci = &dctx[i * d + off..i * d + off + hd];
            let mut weighted = T::zero();
            for j in 0..n {
                let vj = &c.v[j * d + off..j * d + off + hd];
                let da = crate::model::ops::dot(dci, vj);
                ds[j] = da;
                weighted += a[i * n + j] * da;
                let aij = a[i * n + j];
                for (dvv, dc) in dv[j * d + off..j * d + off + hd].iter_mut().zip(dci) {
                    *dvv += aij * *dc;
                }
            }
            for j in 0..n {
                let s = a[i * n + j] * (ds[j] - weighted) * scale;
                if s == T::zero() {
                    continue;
                }
                for t in 0..hd {
                    dq[i * d + off + t] += s * c.k[j * d + off + t];
                    dk[j * d + off + t] += s * c.q[i * d + off + t];
                }
            }
        }
    }
    let mut dh1 = vec![T::zero(); n * d];
    linear_backward(&dq, &c.h1, n, d, &p.wq, d, &mut g.wq, &mut g.bq, Some(&mut dh1));
    linear_backward(&dk, &c.h1, n, d, &p.wk, d, &mut g.wk, &mut g.bk, Some(&mut dh1));
    linear_backward(&dv, &c.h1, n, d, &p.wv, d, &mut g.wv, &mut g.bv, Some(&mut dh1));
    layer_norm_backward(
        &dh1,
        &c.ln1_xhat,
        &c.ln1_inv,
        d,
        &p.ln1_g,
        &mut g.ln1_g,
        &mut g.ln1_b,
        &mut dx_in,
    );
    dx_in
}

/// Runs the transformer on `seq` and returns the final-normalized CLS row.
pub fn transformer_forward<T: Real>(seq: &TokenSequence<T>, params: &ModelParams<T>) -> Result<Vec<T>, ModelError> {
    if seq.dim != params.config.dim || seq.tokens.len() != seq.rows() * seq.dim {
        return Err(ModelError::Shape("token sequence does not match model dim".into()));
    }
    let mut x = seq.tokens.clone();
    for p in &params.layers {
        layer_forward(&mut x, seq.rows(), p, &params.config);
        check_finite(&x, "transformer layer")?;
    }
    let (z, _, _) = layer_norm(&x[..seq.dim], seq.dim, &params.lnf_g, &params.lnf_b);
    check_finite(&z, "final layer norm")?;
    Ok(z)
}

/// A forward pass with everything the backward pass needs.
pub struct ViewportForward<T> {
    pub score: T,
    n_patches: usize,
    center: [T; 2],
    source_index: usize,
    encoder: EncoderCache<T>,
    layers: Vec<LayerCache<T>>,
    lnf_xhat: Vec<T>,
    lnf_inv: Vec<T>,
    cls_out: Vec<T>,
}

impl<T: Real> ViewportForward<T> {
    pub fn run(vp: &TangentViewport<T>, params: &ModelParams<T>) -> Result<Self, ModelError> {
        let cfg = &params.config;
        let n_patches = cfg.validate_resolution(vp.resolution)?;
        let patches: Vec<T> = patchify(&vp.pixels, vp.resolution, cfg.patch_size)?.concat();
        let (tokens, encoder) = encode_cached(&patches, n_patches, params)?;
        check_finite(&tokens, "patch encoder")?;
        let seq = add_embeddings(&tokens, vp.center, vp.source_index, params)?;
        let n = seq.rows();
        let mut x = seq.tokens;
        let mut layers = Vec::with_capacity(cfg.layers);
        for p in &params.layers {
            layers.push(layer_forward(&mut x, n, p, cfg));
            check_finite(&x, "transformer layer")?;
        }
        let d = cfg.dim;
        let (cls_out, lnf_xhat, lnf_inv) = layer_norm(&x[..d], d, &params.lnf_g, &params.lnf_b);
        let score = params.head_b[0] + crate::model::ops::dot(&params.head_w, &cls_out);
        if !score.is_finite() {
            return Err(ModelError::NumericOverflow("score head"));
        }
        Ok(Self {
            score,
            n_patches,
            center: normalized_center(vp.center),
            source_index: vp.source_index,
            encoder,
            layers,
            lnf_xhat,
            lnf_inv,
            cls_out,
        })
    }

    /// Attention weights of one layer, `heads × n × n` with `n = patches + 1`.
    pub fn attention(&self, layer: usize) -> &[T] {
        &self.layers[layer].attn
    }

    pub fn n_tokens(&self) -> usize {
        self.n_patches + 1
    }

    /// Final CLS representation fed to the head.
    pub fn cls_output(&self) -> &[T] {
        &self.cls_out
    }

    /// Accumulates `dscore * d(score)/d(params)` into `grads`.
    pub fn backward(&self, dscore: T, params: &ModelParams<T>, grads: &mut ModelParams<T>) {
        let cfg = &params.config;
        let d = cfg.dim;
        let n = self.n_patches + 1;

        for (g, z) in grads.head_w.iter_mut().zip(&self.cls_out) {
            *g += dscore * *z;
        }
        grads.head_b[0] += dscore;
        let dz: Vec<T> = params.head_w.iter().map(|w| *w * dscore).collect();
        let mut dx = vec![T::zero(); n * d];
        layer_norm_backward(
            &dz,
            &self.lnf_xhat,
            &self.lnf_inv,
            d,
            &params.lnf_g,
            &mut grads.lnf_g,
            &mut grads.lnf_b,
            &mut dx[..d],
        );
        for (l, cache) in self.layers.iter().enumerate().rev() {
            dx = layer_backward(&dx, n, cache, &params.layers[l], &mut grads.layers[l], cfg);
        }

        for (g, v) in grads.cls.iter_mut().zip(&dx[..d]) {
            *g += *v;
        }
        let dtokens = &dx[d..];
        let mut dshared = vec![T::zero(); d];
        for (i, row) in dtokens.chunks_exact(d).enumerate() {
            for (k, v) in row.iter().enumerate() {
                grads.positional[i * d + k] += *v;
                dshared[k] += *v;
            }
        }
        if cfg.geometric_embedding {
            for (k, s) in dshared.iter().enumerate() {
                grads.geometric[2 * k] += *s * self.center[0];
                grads.geometric[2 * k + 1] += *s * self.center[1];
            }
        }
        if cfg.source_embedding {
            let row = &mut grads.source[self.source_index * d..(self.source_index + 1) * d];
            for (g, s) in row.iter_mut().zip(&dshared) {
                *g += *s;
            }
        }
        self.encoder_backward(dtokens, params, grads);
    }

    fn encoder_backward(&self, dtokens: &[T], params: &ModelParams<T>, grads: &mut ModelParams<T>) {
        let cfg = &params.config;
        let count = self.n_patches;
        let d = cfg.dim;
        match (&self.encoder, &params.encoder, &mut grads.encoder) {
            (
                EncoderCache::Linear { input },
                EncoderParams::Linear { w, .. },
                EncoderParams::Linear { w: gw, b: gb },
            ) => {
                linear_backward(dtokens, input, count, cfg.patch_len(), w, d, gw, gb, None);
            }
            (
                EncoderCache::Conv {
                    cols1,
                    pre1,
                    cols2,
                    pre2,
                    features,
                },
                EncoderParams::Conv { conv2_w, proj_w, .. },
                EncoderParams::Conv {
                    conv1_w: g1w,
                    conv1_b: g1b,
                    conv2_w: g2w,
                    conv2_b: g2b,
                    proj_w: gpw,
                    proj_b: gpb,
                },
            ) => {
                let act = cfg.activation;
                let s = cfg.patch_size;
                let h = s / 2;
                let mut dfeat = vec![T::zero(); features.len()];
                linear_backward(
                    dtokens,
                    features,
                    count,
                    cfg.conv_features(),
                    proj_w,
                    d,
                    gpw,
                    gpb,
                    Some(&mut dfeat),
                );
                let mut dpre2 = avg_pool2_backward(&dfeat, count, h, CONV2_CHANNELS);
                for (g, u) in dpre2.iter_mut().zip(pre2) {
                    *g *= act.derivative(*u);
                }
                let mut dcols2 = vec![T::zero(); cols2.len()];
                linear_backward(
                    &dpre2,
                    cols2,
                    count * h * h,
                    9 * CONV1_CHANNELS,
                    conv2_w,
                    CONV2_CHANNELS,
                    g2w,
                    g2b,
                    Some(&mut dcols2),
                );
                let dpool1 = col2im3(&dcols2, count, h, CONV1_CHANNELS);
                let mut dpre1 = avg_pool2_backward(&dpool1, count, s, CONV1_CHANNELS);
                for (g, u) in dpre1.iter_mut().zip(pre1) {
                    *g *= act.derivative(*u);
                }
                linear_backward(&dpre1, cols1, count * s * s, 27, &[], CONV1_CHANNELS, g1w, g1b, None);
            }
            _ => unreachable!("encoder kind is fixed by the config"),
        }
    }
}

/// Quality score of one viewport.
pub fn score_viewport<T: Real>(vp: &TangentViewport<T>, params: &ModelParams<T>) -> Result<T, ModelError> {
    Ok(ViewportForward::run(vp, params)?.score)
}

/// Mean score over an image's viewports.
pub fn score_image<T: Real>(viewports: &[TangentViewport<T>], params: &ModelParams<T>) -> Result<T, ModelError> {
    if viewports.is_empty() {
        return Err(ModelError::EmptyViewports);
    }
    let mut scores = viewports
        .iter()
        .map(|vp| score_viewport(vp, params))
        .collect::<Result<Vec<T>, _>>()?;
    // summing in sorted order makes the mean bitwise independent of input order
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let total = scores.iter().fold(T::zero(), |acc, &s| acc + s);
    Ok(total / T::of_usize(viewports.len()))
}
