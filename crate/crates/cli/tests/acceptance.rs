//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria run sequentially in a single test so their runtimes are measured
//! without interference. A failing criterion does not stop the others; the
//! test fails at the end if any criterion did.
//!
//! Run with `cargo test -p panoiqa-cli --test acceptance -- --nocapture` to
//! see the report. `PANOIQA_CRITERIA=1,3` restricts the run to the listed
//! criteria; the others print SKIP.

mod support;

use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use panoiqa::imageio::{load_manifest, ErpImage, SaliencyMap};
use panoiqa::metrics::{fit_logistic5, pearson, plcc, srcc};
use panoiqa::model::{
    score_image, score_viewport, tensor_specs, transformer_forward, Activation, EncoderKind, ModelConfig, ModelParams,
    TokenSequence, ViewportForward,
};
use panoiqa::sampling::{
    extract_viewport, mean_shift_filter, region_count, region_scores, select_regions, Region, RegionGrid, SamplingMode,
    TangentViewport, ViewportMode,
};
use panoiqa::sphere::{
    erp_to_sphere, gnomonic_forward, gnomonic_inverse, sphere_to_erp, PlanePoint, SphericalPoint, TangentPlaneSpec,
};
use panoiqa::training::{backward, mae_loss};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Outcome of one criterion: pass flag plus a one-line summary.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Runs one criterion, converting panics into failures.
fn run(id: usize, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    if let Ok(only) = std::env::var("PANOIQA_CRITERIA") {
        if !only.split(',').any(|s| s.trim() == id.to_string()) {
            println!("SKIP criterion {id}: {name}");
            return true;
        }
    }
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!(
        "{tag} criterion {id}: {name}: {} [{:.1} s]",
        v.detail,
        start.elapsed().as_secs_f64()
    );
    v.pass
}

#[test]
fn acceptance() {
    let results = [
        run(1, "geometry", geometry),
        run(2, "sampling", sampling),
        run(3, "gradients", gradients),
        run(4, "model invariants", model_invariants),
        run(5, "metrics oracles", metrics_oracles),
        run(6, "desk-scale end-to-end", end_to_end),
        run(7, "ablation direction", ablation),
    ];
    let failed: Vec<usize> = (1..=7).filter(|i| !results[i - 1]).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- geometry

/// Great-circle distance, used as the round-trip error on the sphere.
fn angular_distance(a: SphericalPoint<f64>, b: SphericalPoint<f64>) -> f64 {
    // haversine form, well conditioned for nearby points
    let h = ((a.lat - b.lat) / 2.0).sin().powi(2) + a.lat.cos() * b.lat.cos() * ((a.lon - b.lon) / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

fn random_point(rng: &mut ChaCha8Rng) -> SphericalPoint<f64> {
    // uniform on the sphere
    let z: f64 = rng.gen_range(-1.0..1.0);
    SphericalPoint::new(z.asin(), rng.gen_range(-PI..PI)).unwrap()
}

fn geometry() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = 2000;

    // plane -> sphere -> plane, and sphere -> plane -> sphere
    let mut gn_err = 0f64;
    let mut gn_dist_err = 0f64;
    for _ in 0..cases {
        let center = random_point(&mut rng);
        let q = PlanePoint {
            x: rng.gen_range(-3.0..3.0),
            y: rng.gen_range(-3.0..3.0),
        };
        let p = gnomonic_inverse(center, q);
        let back = gnomonic_forward(center, p).unwrap();
        gn_err = gn_err.max((back.x - q.x).abs().max((back.y - q.y).abs()));
        // the plane radius of a point is tan of its angular distance from the center
        gn_dist_err = gn_dist_err.max((q.x.hypot(q.y).atan() - angular_distance(center, p)).abs());

        let p = loop {
            let p = random_point(&mut rng);
            if angular_distance(center, p) < 1.3 {
                break p;
            }
        };
        let back = gnomonic_inverse(center, gnomonic_forward(center, p).unwrap());
        gn_err = gn_err.max(angular_distance(p, back));
    }

    // pixel -> sphere -> pixel, and sphere -> pixel -> sphere
    let mut erp_err = 0f64;
    for _ in 0..cases {
        let h = rng.gen_range(2..600usize);
        let w = rng.gen_range(2..1200usize);
        let row = rng.gen_range(-0.5..h as f64 - 0.5);
        let col = rng.gen_range(0.0..w as f64);
        let (r, c) = sphere_to_erp(erp_to_sphere(row, col, h, w).unwrap(), h, w);
        let dc = (c - col).abs().min(w as f64 - (c - col).abs());
        erp_err = erp_err.max((r - row).abs().max(dc));

        let p = random_point(&mut rng);
        let (r, c) = sphere_to_erp(p, h, w);
        let back = erp_to_sphere(r, c, h, w).unwrap();
        erp_err = erp_err.max(angular_distance(p, back));
    }

    // Rolling the panorama by k columns and turning the viewport by the same
    // longitude must render the same pixels.
    let (h, w) = (64, 128);
    let img = ErpImage::from_fn(w, h, |r, c| {
        let (r, c) = (r as f64, c as f64);
        [
            (0.5 + 0.4 * (c * 0.31).sin() * (r * 0.17).cos()),
            (0.5 + 0.4 * (c * 0.07 + r * 0.23).sin()),
            ((r * 7.0 + c * 13.0) % 17.0) / 17.0,
        ]
    })
    .unwrap();
    let mut rot_err = 0f64;
    for _ in 0..50 {
        let k = rng.gen_range(1..w);
        let rolled = img.roll_columns(k);
        let center = SphericalPoint::new(rng.gen_range(-1.4..1.4), rng.gen_range(-PI..PI)).unwrap();
        let lon = center.lon + k as f64 * 2.0 * PI / w as f64;
        let moved = SphericalPoint::new(center.lat, (lon + PI).rem_euclid(2.0 * PI) - PI).unwrap();
        let fov = rng.gen_range(0.3..1.5);
        let a = extract_viewport(&img, center, fov, 24, ViewportMode::Tangent).unwrap();
        let b = extract_viewport(&rolled, moved, fov, 24, ViewportMode::Tangent).unwrap();
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            rot_err = rot_err.max((x - y).abs());
        }
    }

    let elapsed = start.elapsed();
    let pass = gn_err < 1e-9 && gn_dist_err < 1e-9 && erp_err < 1e-9 && rot_err < 1e-6 && within(elapsed, 5.0);
    verdict(
        pass,
        format!(
            "{cases}x2 gnomonic max err {gn_err:.1e} (radius-angle {gn_dist_err:.1e}), \
             {cases}x2 ERP max err {erp_err:.1e}, rotation max err {rot_err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- sampling

/// Region count by enumerating top-left corners: rows while the window fits,
/// columns at every stride step before the seam.
fn brute_region_count(h: usize, w: usize, size: usize, stride: usize) -> usize {
    let rows = (0..).map(|i| i * stride).take_while(|r| r + size <= h).count();
    let cols = (0..).map(|i| i * stride).take_while(|c| *c < w).count();
    rows * cols
}

fn grid_of(weights: &[f64]) -> RegionGrid<f64> {
    RegionGrid {
        region_size: 1,
        stride: 1,
        height: 1,
        width: weights.len(),
        regions: weights
            .iter()
            .enumerate()
            .map(|(i, w)| Region {
                row: 0,
                col: i,
                center_row: 0.0,
                center_col: i as f64,
                mean_saliency: *w,
            })
            .collect(),
    }
}

fn sampling() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    let mut count_ok = true;
    for _ in 0..300 {
        let h = rng.gen_range(8..80);
        let w = rng.gen_range(8..160);
        let stride = rng.gen_range(1..12);
        let size = rng.gen_range(stride..=h.min(24).max(stride));
        if size > h {
            continue;
        }
        let map = SaliencyMap::from_fn(w, h, |r, c| ((r * 31 + c * 17) % 11) as f64).unwrap();
        let grid = region_scores(&map, size, stride).unwrap();
        let expect = brute_region_count(h, w, size, stride);
        count_ok &= region_count(h, w, size, stride) == expect && grid.regions.len() == expect;
        let fraction = rng.gen_range(0.01..1.0);
        let k = ((fraction * expect as f64).round() as usize).clamp(1, expect);
        let picks = select_regions(&grid, fraction, SamplingMode::SaliencyWeighted, rng.gen()).unwrap();
        let mut distinct = picks.clone();
        distinct.sort_unstable();
        distinct.dedup();
        count_ok &= picks.len() == k && distinct.len() == k;
    }

    // weights (9, 1), k = 1: the heavy region wins 90% of the time
    let draws = 10_000u64;
    let heavy = grid_of(&[9.0, 1.0]);
    let wins = (0..draws)
        .filter(|s| select_regions(&heavy, 0.1, SamplingMode::SaliencyWeighted, *s).unwrap()[0] == 0)
        .count();
    let freq = wins as f64 / draws as f64;

    // equal weights vs unweighted: first-pick histograms from disjoint seeds
    let n = 10;
    let flat = grid_of(&[2.5; 10]);
    let histogram = |mode: SamplingMode, offset: u64| {
        let mut h = vec![0f64; n];
        for s in 0..draws {
            h[select_regions(&flat, 0.3, mode, offset + s).unwrap()[0]] += 1.0;
        }
        h
    };
    let a = histogram(SamplingMode::SaliencyWeighted, 0);
    let b = histogram(SamplingMode::UniformRandom, 1 << 32);
    let total = 2.0 * draws as f64;
    let mut chi2 = 0.0;
    for i in 0..n {
        let col = a[i] + b[i];
        for obs in [a[i], b[i]] {
            let e = col * draws as f64 / total;
            chi2 += (obs - e).powi(2) / e;
        }
    }
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);

    // mean-shift identities
    let random = SaliencyMap::from_fn(40, 20, |_, _| rng.gen::<f64>()).unwrap();
    let ones = SaliencyMap::from_fn(40, 20, |_, _| 1.0).unwrap();
    let identities = mean_shift_filter(&random, 5, 0) == random && mean_shift_filter(&ones, 5, 4) == ones;

    let elapsed = start.elapsed();
    let pass = count_ok && (freq - 0.9).abs() <= 0.02 && p > 0.01 && identities && within(elapsed, 30.0);
    verdict(
        pass,
        format!(
            "counts exact: {count_ok}, (9,1) frequency {freq:.4}, chi-square p {p:.3}, \
             mean-shift identities: {identities}"
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn random_viewport(rng: &mut ChaCha8Rng, res: usize, source_index: usize) -> TangentViewport<f64> {
    let center = SphericalPoint::new(rng.gen_range(-1.2..1.2), rng.gen_range(-3.0..3.0)).unwrap();
    TangentViewport {
        pixels: (0..res * res * 3).map(|_| rng.gen::<f64>()).collect(),
        resolution: res,
        center,
        spec: TangentPlaneSpec::new(center, FRAC_PI_4, res).unwrap(),
        source_index,
    }
}

fn batch_loss(batch: &[(&TangentViewport<f64>, f64)], params: &ModelParams<f64>) -> f64 {
    let preds: Vec<f64> = batch
        .iter()
        .map(|(vp, _)| score_viewport(vp, params).unwrap())
        .collect();
    let targets: Vec<f64> = batch.iter().map(|(_, t)| *t).collect();
    mae_loss(&preds, &targets).unwrap()
}

/// Central differences against the analytic gradient on coordinates drawn
/// from every tensor. Returns (checked, worst relative error, tensors covered).
fn fd_check(activation: Activation, seed: u64) -> (usize, f64, usize, usize) {
    let cfg = ModelConfig {
        dim: 8,
        patch_size: 4,
        layers: 1,
        heads: 2,
        mlp_dim: 16,
        n_sources: 3,
        max_patches: 4,
        encoder: EncoderKind::Conv,
        activation,
        geometric_embedding: true,
        source_embedding: true,
        init_std: 0.4,
    };
    let mut params = ModelParams::<f64>::init(&cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    // move layer-norm gains and zero biases off their special values
    params.for_each_mut(|_, data| {
        for v in data.iter_mut() {
            if *v == 0.0 || *v == 1.0 {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
    });
    let vps: Vec<_> = (0..3).map(|i| random_viewport(&mut rng, 4, i)).collect();
    // targets far from every prediction keep the residual signs fixed
    let batch: Vec<(&TangentViewport<f64>, f64)> = vps.iter().zip([50.0, -50.0, 50.0]).collect();
    let grads: Vec<Vec<f64>> = backward(&batch, &params)
        .unwrap()
        .grads
        .tensors()
        .into_iter()
        .cloned()
        .collect();
    let n_tensors = tensor_specs(&cfg).len();

    let eps = 1e-4;
    let (mut checked, mut worst, mut covered) = (0, 0f64, 0);
    for (t, grad) in grads.iter().enumerate() {
        let mut hit = false;
        for k in 0..12.min(grad.len()) {
            let idx = if k == 0 { 0 } else { rng.gen_range(0..grad.len()) };
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t][idx] += delta;
                batch_loss(&batch, &p)
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            if activation == Activation::Relu {
                // A ReLU input crossing zero within the stencil makes the two
                // step sizes disagree at first order; smooth points agree to O(eps^2).
                let half = (eval(eps / 2.0) - eval(-eps / 2.0)) / eps;
                if (numeric - half).abs() > 1e-5 * numeric.abs().max(half.abs()).max(1e-4) {
                    continue;
                }
            }
            let a = grad[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
            checked += 1;
            hit = true;
        }
        covered += hit as usize;
    }
    (checked, worst, covered, n_tensors)
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (act, seed) in [(Activation::Gelu, 21), (Activation::Relu, 22)] {
        let (checked, worst, covered, total) = fd_check(act, seed);
        pass &= checked >= 200 && worst < 1e-3 && covered == total;
        parts.push(format!(
            "{act:?}: {checked} coords, {covered}/{total} tensors, max rel err {worst:.1e}"
        ));
    }
    pass &= within(start.elapsed(), 60.0);
    verdict(pass, parts.join("; "))
}

// ---------------------------------------------------------------- model

fn ln(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    x.iter()
        .zip(g)
        .zip(b)
        .map(|((v, g), b)| (v - mean) / (var + 1e-5).sqrt() * g + b)
        .collect()
}

/// `W x + b` for an output-major `W`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + x.iter().enumerate().map(|(i, xi)| w[o * x.len() + i] * xi).sum::<f64>())
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// One pre-norm block on two 2-wide tokens, written out by hand.
fn two_token_error() -> f64 {
    let cfg = ModelConfig {
        dim: 2,
        patch_size: 8,
        heads: 1,
        layers: 1,
        mlp_dim: 2,
        max_patches: 1,
        n_sources: 0,
        encoder: EncoderKind::Linear,
        ..ModelConfig::toy()
    };
    let mut p = ModelParams::<f64>::zeros(&cfg).unwrap();
    {
        let l = &mut p.layers[0];
        l.ln1_g = vec![0.9, 1.4];
        l.ln1_b = vec![-0.2, 0.05];
        l.wq = vec![0.3, 0.8, -0.6, 0.1];
        l.bq = vec![0.0, 0.1];
        l.wk = vec![0.7, -0.2, 0.4, 0.5];
        l.bk = vec![0.03, 0.0];
        l.wv = vec![-0.9, 0.3, 0.6, 1.2];
        l.bv = vec![0.2, -0.1];
        l.wo = vec![1.1, 0.1, -0.3, 0.7];
        l.bo = vec![0.0, 0.04];
        l.ln2_g = vec![1.1, 0.6];
        l.ln2_b = vec![0.1, 0.0];
        l.w1 = vec![0.8, 0.5, -1.2, 0.3];
        l.b1 = vec![-0.1, 0.2];
        l.w2 = vec![0.6, -0.4, 0.2, 1.0];
        l.b2 = vec![0.0, 0.03];
    }
    p.lnf_g = vec![0.8, 1.6];
    p.lnf_b = vec![-0.1, 0.25];
    let l = p.layers[0].clone();
    let x = [vec![-0.6, 1.1], vec![0.9, 0.3]];
    let seq = TokenSequence {
        tokens: x.concat(),
        n_patches: 1,
        dim: 2,
    };
    let got = transformer_forward(&seq, &p).unwrap();

    let h: Vec<Vec<f64>> = x.iter().map(|r| ln(r, &l.ln1_g, &l.ln1_b)).collect();
    let q: Vec<Vec<f64>> = h.iter().map(|r| affine(&l.wq, &l.bq, r)).collect();
    let k: Vec<Vec<f64>> = h.iter().map(|r| affine(&l.wk, &l.bk, r)).collect();
    let v: Vec<Vec<f64>> = h.iter().map(|r| affine(&l.wv, &l.bv, r)).collect();
    let mut x1 = x.clone();
    for i in 0..2 {
        let s: Vec<f64> = (0..2)
            .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt())
            .collect();
        let z = s[0].exp() + s[1].exp();
        let (a0, a1) = (s[0].exp() / z, s[1].exp() / z);
        let ctx = [a0 * v[0][0] + a1 * v[1][0], a0 * v[0][1] + a1 * v[1][1]];
        let o = affine(&l.wo, &l.bo, &ctx);
        x1[i][0] += o[0];
        x1[i][1] += o[1];
    }
    for row in x1.iter_mut() {
        let hidden: Vec<f64> = affine(&l.w1, &l.b1, &ln(row, &l.ln2_g, &l.ln2_b))
            .into_iter()
            .map(gelu)
            .collect();
        let m = affine(&l.w2, &l.b2, &hidden);
        row[0] += m[0];
        row[1] += m[1];
    }
    let expect = ln(&x1[0], &p.lnf_g, &p.lnf_b);
    got.iter().zip(&expect).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max)
}

fn model_invariants() -> Verdict {
    let cfg = ModelConfig {
        dim: 16,
        layers: 2,
        heads: 2,
        mlp_dim: 32,
        n_sources: 4,
        max_patches: 4,
        init_std: 0.5,
        ..ModelConfig::toy()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = ModelParams::<f64>::init(&cfg, 41).unwrap();

    let mut row_err = 0f64;
    for _ in 0..10 {
        let source = rng.gen_range(0..5);
        let vp = random_viewport(&mut rng, 16, source);
        let f = ViewportForward::run(&vp, &params).unwrap();
        let n = f.n_tokens();
        for layer in 0..cfg.layers {
            for row in f.attention(layer).chunks_exact(n) {
                row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }

    let vps: Vec<_> = (0..12).map(|i| random_viewport(&mut rng, 16, i % 4)).collect();
    let base = score_image(&vps, &params).unwrap();
    let mut perm_exact = true;
    for _ in 0..20 {
        let mut shuffled = vps.clone();
        shuffled.shuffle(&mut rng);
        perm_exact &= score_image(&shuffled, &params).unwrap().to_bits() == base.to_bits();
    }

    let mut ablated = params.clone();
    ablated.geometric.iter_mut().for_each(|v| *v = 0.0);
    ablated.source.iter_mut().for_each(|v| *v = 0.0);
    let mut ablation_exact = true;
    for vp in &vps {
        let s = score_viewport(vp, &ablated).unwrap();
        for src in 0..5 {
            let moved = TangentViewport {
                center: random_point(&mut rng),
                source_index: src,
                ..vp.clone()
            };
            ablation_exact &= score_viewport(&moved, &ablated).unwrap() == s;
        }
    }

    let oracle = two_token_error();
    let pass = row_err <= 1e-6 && perm_exact && ablation_exact && oracle < 1e-10;
    verdict(
        pass,
        format!(
            "attention row-sum err {row_err:.1e}, permutation exact: {perm_exact}, \
             ablated embeddings exact: {ablation_exact}, 2-token oracle err {oracle:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- metrics

/// Pearson correlation, two-pass.
fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Fractional rank by counting: 1 + #smaller + (#equal - 1) / 2.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let less = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn standard_logistic(b: [f64; 5], x: f64) -> f64 {
    b[0] * (0.5 - 1.0 / (1.0 + (b[1] * (x - b[2])).exp())) + b[3] * x + b[4]
}

fn metrics_oracles() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut srcc_err, mut pearson_err, mut plcc_err, mut mono_err) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..100 {
        let n = rng.gen_range(5..14);
        // every other instance draws from a small set to force ties
        let draw = |rng: &mut ChaCha8Rng| {
            if i % 2 == 0 {
                rng.gen_range(-3.0..3.0)
            } else {
                rng.gen_range(0..4) as f64
            }
        };
        let (x, y): (Vec<f64>, Vec<f64>) = loop {
            let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if x.iter().any(|v| *v != x[0]) {
                break (x, y);
            }
        };
        let rx = brute_ranks(&x);
        srcc_err = srcc_err.max((srcc(&x, &y).unwrap() - brute_pearson(&rx, &brute_ranks(&y))).abs());
        pearson_err = pearson_err.max((pearson(&x, &y).unwrap() - brute_pearson(&x, &y)).abs());
        if let Ok(fit) = fit_logistic5(&x, &y) {
            let mapped: Vec<f64> = x.iter().map(|v| fit.apply(*v)).collect();
            if let Ok(p) = plcc(&x, &y) {
                plcc_err = plcc_err.max((p - brute_pearson(&mapped, &y)).abs());
            }
        }
        for g in [f64::exp as fn(f64) -> f64, |v: f64| v.powi(3) + v, f64::atan] {
            let gx: Vec<f64> = x.iter().map(|v| g(*v)).collect();
            mono_err = mono_err.max((srcc(&gx, &y).unwrap() - srcc(&x, &y).unwrap()).abs());
        }
    }

    // generate noise-free curves and recover them
    let mut worst_sse = 0f64;
    for beta in [
        [4.0, 1.5, 0.5, 0.1, 2.0],
        [-3.0, 2.0, -1.0, 0.0, 1.0],
        [10.0, 0.8, 2.0, 0.3, -1.0],
        [2.0, 3.0, 0.0, -0.2, 0.5],
    ] {
        let x: Vec<f64> = (0..40).map(|i| -4.0 + 0.2 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| standard_logistic(beta, *v)).collect();
        let fit = fit_logistic5(&x, &y).unwrap();
        let sse: f64 = x.iter().zip(&y).map(|(a, b)| (fit.apply(*a) - b).powi(2)).sum();
        worst_sse = worst_sse.max(sse);
    }

    let pass = srcc_err < 1e-12 && pearson_err < 1e-12 && plcc_err < 1e-12 && worst_sse < 1e-10 && mono_err < 1e-12;
    verdict(
        pass,
        format!(
            "srcc err {srcc_err:.1e}, pearson err {pearson_err:.1e}, plcc err {plcc_err:.1e}, \
             logistic recovery SSE {worst_sse:.1e}, monotone invariance err {mono_err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- experiments

const SPLIT_SEED: &str = "7";
const SPLIT_FRACTION: &str = "0.75";
const SEEDS: [u64; 3] = [1, 2, 3];

fn desk_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.conf")
}

/// Synthetic dataset plus its 6/2 scene split, shared by criteria 6 and 7.
struct Experiment {
    _dir: tempfile::TempDir,
    root: PathBuf,
    setup: Duration,
}

static EXPERIMENT: std::sync::OnceLock<Experiment> = std::sync::OnceLock::new();

fn experiment() -> &'static Experiment {
    EXPERIMENT.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let manifest = support::write_blur_dataset(&root, 8);
        let split = root.join("split");
        support::run_cli(&[
            "split",
            "--manifest",
            manifest.to_str().unwrap(),
            "--fraction",
            SPLIT_FRACTION,
            "--seed",
            SPLIT_SEED,
            "--out",
            split.to_str().unwrap(),
        ]);
        Experiment {
            _dir: dir,
            root,
            setup: start.elapsed(),
        }
    })
}

/// Trains one model and returns (checkpoint, training time).
fn train_run(exp: &Experiment, name: &str, seed: u64, extra: &[&str]) -> (PathBuf, Duration) {
    let start = Instant::now();
    let ckpt = exp.root.join(format!("{name}.ckpt"));
    let mut args = vec![
        "--config".to_string(),
        desk_config().to_str().unwrap().to_string(),
        "--seed".to_string(),
        seed.to_string(),
    ];
    for kv in extra {
        args.extend(["--set".to_string(), kv.to_string()]);
    }
    args.extend([
        "train".into(),
        "--manifest".into(),
        exp.root.join("split/train.jsonl").to_str().unwrap().into(),
        "--out".into(),
        ckpt.to_str().unwrap().into(),
    ]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    support::run_cli(&refs);
    (ckpt, start.elapsed())
}

/// Overall SRCC of a checkpoint on one split.
fn eval_srcc(exp: &Experiment, ckpt: &Path, split: &str, seed: u64, extra: &[&str]) -> f64 {
    let mut args = vec![
        "--config".to_string(),
        desk_config().to_str().unwrap().to_string(),
        "--seed".to_string(),
        seed.to_string(),
    ];
    for kv in extra {
        args.extend(["--set".to_string(), kv.to_string()]);
    }
    args.extend([
        "eval".into(),
        "--checkpoint".into(),
        ckpt.to_str().unwrap().into(),
        "--manifest".into(),
        exp.root.join(format!("split/{split}.jsonl")).to_str().unwrap().into(),
    ]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = support::run_cli(&refs);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    report["overall"]["srcc"].as_f64().unwrap_or(f64::NAN)
}

/// Test SRCC of the full model per seed, shared with criterion 7.
static FULL_TEST: std::sync::Mutex<Vec<(u64, f64)>> = std::sync::Mutex::new(Vec::new());

fn end_to_end() -> Verdict {
    let exp = experiment();
    let start = Instant::now();
    let train = load_manifest(exp.root.join("split/train.jsonl")).unwrap();
    let test = load_manifest(exp.root.join("split/test.jsonl")).unwrap();
    let split_ok = train.scenes().len() == 6 && test.scenes().len() == 2 && train.scenes().is_disjoint(&test.scenes());

    let seed = SEEDS[0];
    let (ckpt, train_time) = train_run(exp, "full_s1", seed, &[]);
    let train_srcc = eval_srcc(exp, &ckpt, "train", seed, &[]);
    let test_srcc = eval_srcc(exp, &ckpt, "test", seed, &[]);
    FULL_TEST.lock().unwrap().push((seed, test_srcc));

    let total = exp.setup + start.elapsed();
    let pass = split_ok && train_srcc >= 0.95 && test_srcc >= 0.70 && within(total, 600.0);
    verdict(
        pass,
        format!(
            "split 6/2 disjoint: {split_ok}, train SRCC {train_srcc:.3} (>= 0.95), test SRCC {test_srcc:.3} (>= 0.70), \
             training {:.0} s, total {:.0} s (< 600 s)",
            train_time.as_secs_f64(),
            total.as_secs_f64()
        ),
    )
}

fn ablation() -> Verdict {
    let exp = experiment();
    let uniform = ["sampler.mode=uniform-random"];
    let crop = ["sampler.viewport_mode=erp-crop"];
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let cached = FULL_TEST
            .lock()
            .unwrap()
            .iter()
            .find(|(s, _)| *s == seed)
            .map(|(_, v)| *v);
        let full = cached.unwrap_or_else(|| {
            let (ckpt, _) = train_run(exp, &format!("full_s{seed}"), seed, &[]);
            eval_srcc(exp, &ckpt, "test", seed, &[])
        });
        let (ckpt, _) = train_run(exp, &format!("uniform_s{seed}"), seed, &uniform);
        let uni = eval_srcc(exp, &ckpt, "test", seed, &uniform);
        let (ckpt, _) = train_run(exp, &format!("crop_s{seed}"), seed, &crop);
        let erp = eval_srcc(exp, &ckpt, "test", seed, &crop);
        let ok = full >= uni && full >= erp;
        wins += ok as usize;
        rows.push(format!(
            "seed {seed}: full {full:.3} uniform-random {uni:.3} erp-crop {erp:.3}{}",
            if ok { "" } else { " (not ordered)" }
        ));
    }
    verdict(wins >= 2, format!("{wins}/3 seeds ordered; {}", rows.join("; ")))
}
