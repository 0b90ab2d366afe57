//! Shared fixtures: a procedural ERP dataset with graded Gaussian blur.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use panoiqa::imageio::{save_ppm, DatasetManifest, ErpImage, ManifestEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 256;
pub const HEIGHT: usize = 128;
pub const LEVELS: usize = 5;

/// Blur sigma in pixels for each distortion level; level 0 is pristine.
pub fn blur_sigma(level: usize) -> f64 {
    0.75 * level as f64
}

/// Smooth colour field with textured patches scattered over all latitudes.
pub fn procedural_scene(seed: u64) -> ErpImage<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f64; 3] = [
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
        rng.gen_range(0.2..0.8),
    ];
    let fx = rng.gen_range(1.0..3.0);
    let fy = rng.gen_range(0.5..2.0);
    let mut px: Vec<[f64; 3]> = (0..WIDTH * HEIGHT)
        .map(|i| {
            let (r, c) = ((i / WIDTH) as f64, (i % WIDTH) as f64);
            let t = 0.15
                * ((fx * c / WIDTH as f64 * std::f64::consts::TAU).sin()
                    + (fy * r / HEIGHT as f64 * std::f64::consts::PI).cos());
            [base[0] + t, base[1] - t, base[2] + 0.5 * t]
        })
        .collect();
    let n_patches = rng.gen_range(10..16);
    for _ in 0..n_patches {
        let (h, w) = (rng.gen_range(16..44), rng.gen_range(16..56));
        let r0 = rng.gen_range(0..HEIGHT - h);
        let c0 = rng.gen_range(0..WIDTH);
        let kind = rng.gen_range(0..4);
        let period = rng.gen_range(2..6);
        let a: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let b: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        for r in r0..r0 + h {
            for dc in 0..w {
                let c = (c0 + dc) % WIDTH;
                let on = match kind {
                    0 => (r / period + dc / period) % 2 == 0,
                    1 => (dc / period) % 2 == 0,
                    2 => ((r + dc) / period) % 2 == 0,
                    _ => rng.gen::<bool>(),
                };
                px[r * WIDTH + c] = if on { a } else { b };
            }
        }
    }
    let data = px.iter().flat_map(|p| p.map(|v| v.clamp(0.0, 1.0))).collect();
    ErpImage::new(WIDTH, HEIGHT, data).unwrap()
}

/// Normalized Gaussian taps out to three sigma.
pub fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur; columns wrap, rows clamp.
pub fn gaussian_blur(img: &ErpImage<f64>, sigma: f64) -> ErpImage<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let cc = (c + i as isize - radius).rem_euclid(w);
                    acc += kv * src[((r * w + cc) * 3) as usize + ch];
                }
                tmp[((r * w + c) * 3) as usize + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let rr = (r + i as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[((rr * w + c) * 3) as usize + ch];
                }
                out[((r * w + c) * 3) as usize + ch] = acc.clamp(0.0, 1.0);
            }
        }
    }
    ErpImage::new(img.width(), img.height(), out).unwrap()
}

/// Writes `scenes × LEVELS` images plus `manifest.jsonl`; MOS = 5 − level.
pub fn write_blur_dataset(dir: &Path, scenes: usize) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for s in 0..scenes {
        let scene = procedural_scene(1000 + s as u64);
        for level in 0..LEVELS {
            let name = format!("scene{s}_blur{level}.ppm");
            save_ppm(dir.join(&name), &gaussian_blur(&scene, blur_sigma(level))).unwrap();
            entries.push(ManifestEntry {
                image_path: name,
                saliency_path: None,
                mos: 5.0 - level as f64,
                distortion_label: format!("blur{level}"),
                scene_id: format!("scene{s}"),
            });
        }
    }
    let path = dir.join("manifest.jsonl");
    std::fs::write(&path, DatasetManifest::new(entries, dir).to_jsonl()).unwrap();
    path
}

/// Runs the CLI binary; returns stdout, panicking with stderr on failure.
pub fn run_cli(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "panoiqa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_panoiqa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}
