//! Subcommand implementations. Reports go to stdout, logs to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use panoiqa::imageio::{load_manifest, save_ppm, split_dataset, write_manifest};
use panoiqa::metrics::{evaluate, EvalReport};
use panoiqa::model::{load_checkpoint, save_checkpoint, score_viewport, Checkpoint};
use panoiqa::pipeline::{image_sampler, sample_files};
use panoiqa::training::{train, LossRecord};
use panoiqa::Real;
use serde::Serialize;

use crate::config::{Precision, RunConfig};

/// First sidecar line.
#[derive(Debug, Serialize)]
pub struct SidecarHeader {
    pub image: String,
    pub saliency: String,
    pub baseline_saliency: bool,
    pub uniform_fallback: bool,
    pub n_regions: usize,
    pub n_viewports: usize,
    pub seed: u64,
}

/// One sidecar line per written viewport.
#[derive(Debug, Serialize)]
pub struct SidecarRecord {
    pub index: usize,
    pub file: String,
    pub lat: f64,
    pub lon: f64,
    pub mean_saliency: f64,
    pub seed: u64,
}

pub const SIDECAR_NAME: &str = "viewports.jsonl";

/// Writes `viewport_NNN.ppm` files and the sidecar into `out`.
pub fn cmd_sample(cfg: &RunConfig, image: &Path, saliency: Option<&Path>, out: &Path) -> Result<usize> {
    match cfg.precision {
        Precision::F32 => sample_impl::<f32>(cfg, image, saliency, out),
        Precision::F64 => sample_impl::<f64>(cfg, image, saliency, out),
    }
}

fn sample_impl<T: Real>(cfg: &RunConfig, image: &Path, saliency: Option<&Path>, out: &Path) -> Result<usize> {
    let key = image.to_string_lossy().into_owned();
    let sampled = sample_files::<T>(image, saliency, &key, &cfg.sampler, 0)?;
    let seed = image_sampler(&cfg.sampler, &key).seed;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let header = SidecarHeader {
        image: key.clone(),
        saliency: saliency.map_or("baseline (luminance contrast)".to_string(), |p| p.display().to_string()),
        baseline_saliency: sampled.baseline_saliency,
        uniform_fallback: sampled.uniform_fallback,
        n_regions: sampled.n_regions,
        n_viewports: sampled.viewports.len(),
        seed,
    };
    let mut lines = vec![serde_json::to_string(&serde_json::json!({ "header": header }))?];
    for (i, (vp, region)) in sampled.viewports.iter().zip(&sampled.regions).enumerate() {
        let file = format!("viewport_{i:03}.ppm");
        save_ppm(out.join(&file), &vp.to_image())?;
        lines.push(serde_json::to_string(&SidecarRecord {
            index: i,
            file,
            lat: vp.center.lat.to_f64_lossy(),
            lon: vp.center.lon.to_f64_lossy(),
            mean_saliency: region.mean_saliency.to_f64_lossy(),
            seed,
        })?);
    }
    fs::write(out.join(SIDECAR_NAME), lines.join("\n") + "\n")?;
    info!("wrote {} viewports to {}", sampled.viewports.len(), out.display());
    Ok(sampled.viewports.len())
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub checkpoint: String,
    pub loss_log: String,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub n_images: usize,
}

pub fn default_loss_log(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.jsonl");
    PathBuf::from(s)
}

/// Trains, then writes the checkpoint and the `{step, loss}` log.
pub fn cmd_train(cfg: &RunConfig, manifest: &Path, out: &Path, loss_log: Option<&Path>) -> Result<TrainSummary> {
    let m = load_manifest(manifest)?;
    let log = match cfg.precision {
        Precision::F32 => train_impl::<f32>(cfg, &m, out)?,
        Precision::F64 => train_impl::<f64>(cfg, &m, out)?,
    };
    let log_path = loss_log.map_or_else(|| default_loss_log(out), Path::to_path_buf);
    let mut text = String::new();
    for r in &log {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(&log_path, text).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(TrainSummary {
        checkpoint: out.display().to_string(),
        loss_log: log_path.display().to_string(),
        steps: log.len(),
        final_loss: log.last().map(|r| r.loss),
        n_images: m.len(),
    })
}

fn train_impl<T: Real>(cfg: &RunConfig, m: &panoiqa::imageio::DatasetManifest, out: &Path) -> Result<Vec<LossRecord>> {
    let outcome = train::<T>(m, &cfg.sampler, &cfg.model, &cfg.train)?;
    let ckpt = Checkpoint {
        params: outcome.state.params,
        sources: outcome.sources,
        source_key: outcome.source_key,
    };
    save_checkpoint(out, &ckpt)?;
    Ok(outcome.loss_log)
}

#[derive(Debug, Serialize)]
pub struct ViewportScore {
    pub index: usize,
    pub lat: f64,
    pub lon: f64,
    pub score: f64,
}

#[derive(Debug, Serialize)]
pub struct ScoreReport {
    pub image: String,
    pub score: f64,
    pub viewports: Vec<ViewportScore>,
}

fn expected_model(cfg: &RunConfig) -> Option<&panoiqa::model::ModelConfig> {
    cfg.model_overridden.then_some(&cfg.model)
}

/// Mean viewport score of one image.
pub fn cmd_score(cfg: &RunConfig, checkpoint: &Path, image: &Path, saliency: Option<&Path>) -> Result<ScoreReport> {
    match cfg.precision {
        Precision::F32 => score_impl::<f32>(cfg, checkpoint, image, saliency),
        Precision::F64 => score_impl::<f64>(cfg, checkpoint, image, saliency),
    }
}

fn score_impl<T: Real>(
    cfg: &RunConfig,
    checkpoint: &Path,
    image: &Path,
    saliency: Option<&Path>,
) -> Result<ScoreReport> {
    let ckpt = load_checkpoint::<T>(checkpoint, expected_model(cfg))?;
    ckpt.params.config.validate_resolution(cfg.sampler.resolution)?;
    let key = image.to_string_lossy().into_owned();
    let source = ckpt.source_index(&key);
    let sampled = sample_files::<T>(image, saliency, &key, &cfg.sampler, source)?;
    let mut viewports = Vec::with_capacity(sampled.viewports.len());
    for (i, vp) in sampled.viewports.iter().enumerate() {
        viewports.push(ViewportScore {
            index: i,
            lat: vp.center.lat.to_f64_lossy(),
            lon: vp.center.lon.to_f64_lossy(),
            score: score_viewport(vp, &ckpt.params)?.to_f64_lossy(),
        });
    }
    if viewports.is_empty() {
        bail!("no viewports sampled from {key}");
    }
    let score = viewports.iter().map(|v| v.score).sum::<f64>() / viewports.len() as f64;
    Ok(ScoreReport {
        image: key,
        score,
        viewports,
    })
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, manifest: &Path) -> Result<EvalReport> {
    let m = load_manifest(manifest)?;
    Ok(match cfg.precision {
        Precision::F32 => evaluate(
            &m,
            &load_checkpoint::<f32>(checkpoint, expected_model(cfg))?,
            &cfg.sampler,
        )?,
        Precision::F64 => evaluate(
            &m,
            &load_checkpoint::<f64>(checkpoint, expected_model(cfg))?,
            &cfg.sampler,
        )?,
    })
}

#[derive(Debug, Serialize)]
pub struct SplitSummary {
    pub train: String,
    pub test: String,
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub train_images: usize,
    pub test_images: usize,
}

/// Writes `train.jsonl` and `test.jsonl` into `out`.
pub fn cmd_split(manifest: &Path, fraction: f64, seed: u64, out: &Path) -> Result<SplitSummary> {
    let m = load_manifest(manifest)?;
    let (train, test) = split_dataset(&m, fraction, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (tp, sp) = (out.join("train.jsonl"), out.join("test.jsonl"));
    write_manifest(&tp, &train)?;
    write_manifest(&sp, &test)?;
    Ok(SplitSummary {
        train: tp.display().to_string(),
        test: sp.display().to_string(),
        train_scenes: train.scenes().len(),
        test_scenes: test.scenes().len(),
        train_images: train.len(),
        test_images: test.len(),
    })
}

/// Writes pretty JSON to stdout with a trailing newline.
pub fn print_json<S: Serialize>(value: &S) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}
