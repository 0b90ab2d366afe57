//! Run configuration: defaults, then a `key = value` file, then `--set`
//! overrides, then `--seed`. Keys are dotted (`sampler.fraction`).

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use panoiqa::model::ModelConfig;
use panoiqa::sampling::SamplerConfig;
use panoiqa::training::{Optimizer, TrainConfig};
use serde::de::DeserializeOwned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => bail!("expected f32 or f64"),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub precision: Precision,
    /// Whether any `model.*` key was set explicitly.
    pub model_overridden: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            sampler: SamplerConfig::default(),
            model: ModelConfig::toy(),
            train: TrainConfig::default(),
            seed: 0,
            precision: Precision::default(),
            model_overridden: false,
        };
        cfg.set_seed(0);
        cfg
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

/// Kebab/lowercase enum names, decoded through their serde representation.
fn parse_enum<T: DeserializeOwned>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string())).map_err(|e| anyhow!("{key}: {e}"))
}

impl RunConfig {
    /// The single seed feeds both viewport sampling and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sampler.seed = seed;
        self.train.seed = seed;
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.sampler;
        let m = &mut self.model;
        let t = &mut self.train;
        if key.starts_with("model.") {
            self.model_overridden = true;
        }
        match key {
            "seed" => {
                let seed = parse(key, v)?;
                self.set_seed(seed);
            }
            "precision" => self.precision = parse(key, v)?,

            "sampler.fraction" => s.fraction = parse(key, v)?,
            "sampler.stride" => s.stride = parse(key, v)?,
            "sampler.region_size" => s.region_size = parse(key, v)?,
            "sampler.mean_shift_bandwidth" => s.mean_shift_bandwidth = parse(key, v)?,
            "sampler.mean_shift_iters" => s.mean_shift_iters = parse(key, v)?,
            "sampler.mode" => s.mode = parse_enum(key, v)?,
            "sampler.viewport_mode" => s.viewport_mode = parse_enum(key, v)?,
            "sampler.fov" => s.fov = parse(key, v)?,
            "sampler.fov_degrees" => s.fov = parse::<f64>(key, v)?.to_radians(),
            "sampler.resolution" => s.resolution = parse(key, v)?,

            "model.preset" => {
                *m = match v {
                    "toy" => ModelConfig::toy(),
                    "full" => ModelConfig::full(),
                    _ => bail!("{key}: expected toy or full"),
                }
            }
            "model.dim" => m.dim = parse(key, v)?,
            "model.patch_size" => m.patch_size = parse(key, v)?,
            "model.layers" => m.layers = parse(key, v)?,
            "model.heads" => m.heads = parse(key, v)?,
            "model.mlp_dim" => m.mlp_dim = parse(key, v)?,
            "model.max_patches" => m.max_patches = parse(key, v)?,
            "model.encoder" => m.encoder = parse_enum(key, v)?,
            "model.activation" => m.activation = parse_enum(key, v)?,
            "model.geometric_embedding" => m.geometric_embedding = parse(key, v)?,
            "model.source_embedding" => m.source_embedding = parse(key, v)?,
            "model.init_std" => m.init_std = parse(key, v)?,

            "train.learning_rate" => t.learning_rate = parse(key, v)?,
            "train.steps" => t.steps = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.resample_per_epoch" => t.resample_per_epoch = parse(key, v)?,
            "train.group_by_image" => t.group_by_image = parse(key, v)?,
            "train.source_key" => t.source_key = parse_enum(key, v)?,
            "train.grad_clip" => {
                t.grad_clip = if v == "none" { None } else { Some(parse(key, v)?) };
            }
            "train.optimizer" => {
                t.optimizer = match v {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::default(),
                    _ => bail!("{key}: expected sgd or adam"),
                }
            }
            "train.adam_beta1" | "train.adam_beta2" | "train.adam_eps" => {
                let x: f64 = parse(key, v)?;
                let (mut b1, mut b2, mut eps) = match t.optimizer {
                    Optimizer::Adam { beta1, beta2, eps } => (beta1, beta2, eps),
                    Optimizer::Sgd => bail!("{key}: requires train.optimizer = adam"),
                };
                match key {
                    "train.adam_beta1" => b1 = x,
                    "train.adam_beta2" => b2 = x,
                    _ => eps = x,
                }
                t.optimizer = Optimizer::Adam {
                    beta1: b1,
                    beta2: b2,
                    eps,
                };
            }
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`", i + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got {kv:?}"))?;
        self.set(k.trim(), v)
    }

    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            cfg.apply_text(&text, &p.display().to_string())?;
        }
        for kv in overrides {
            cfg.apply_override(kv)?;
        }
        if let Some(s) = seed {
            cfg.set_seed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.model.validate()?;
        self.model.validate_resolution(self.sampler.resolution).map_err(|e| {
            anyhow!(
                "sampler.resolution = {} does not fit the model: {e}",
                self.sampler.resolution
            )
        })?;
        self.train.validate()?;
        Ok(())
    }

    /// Canonical `key = value` dump, readable by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let s = &self.sampler;
        let m = &self.model;
        let t = &self.train;
        let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("precision = {}", self.precision),
            format!("sampler.fraction = {}", s.fraction),
            format!("sampler.stride = {}", s.stride),
            format!("sampler.region_size = {}", s.region_size),
            format!("sampler.mean_shift_bandwidth = {}", s.mean_shift_bandwidth),
            format!("sampler.mean_shift_iters = {}", s.mean_shift_iters),
            format!("sampler.mode = {}", name(serde_json::to_value(s.mode).unwrap())),
            format!(
                "sampler.viewport_mode = {}",
                name(serde_json::to_value(s.viewport_mode).unwrap())
            ),
            format!("sampler.fov = {}", s.fov),
            format!("sampler.resolution = {}", s.resolution),
            format!("model.dim = {}", m.dim),
            format!("model.patch_size = {}", m.patch_size),
            format!("model.layers = {}", m.layers),
            format!("model.heads = {}", m.heads),
            format!("model.mlp_dim = {}", m.mlp_dim),
            format!("model.max_patches = {}", m.max_patches),
            format!("model.encoder = {}", name(serde_json::to_value(m.encoder).unwrap())),
            format!(
                "model.activation = {}",
                name(serde_json::to_value(m.activation).unwrap())
            ),
            format!("model.geometric_embedding = {}", m.geometric_embedding),
            format!("model.source_embedding = {}", m.source_embedding),
            format!("model.init_std = {}", m.init_std),
            format!("train.learning_rate = {}", t.learning_rate),
            format!("train.steps = {}", t.steps),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.resample_per_epoch = {}", t.resample_per_epoch),
            format!("train.group_by_image = {}", t.group_by_image),
            format!(
                "train.source_key = {}",
                name(serde_json::to_value(t.source_key).unwrap())
            ),
            format!(
                "train.grad_clip = {}",
                t.grad_clip.map_or("none".to_string(), |c| c.to_string())
            ),
        ];
        match t.optimizer {
            Optimizer::Sgd => lines.push("train.optimizer = sgd".into()),
            Optimizer::Adam { beta1, beta2, eps } => {
                lines.push("train.optimizer = adam".into());
                lines.push(format!("train.adam_beta1 = {beta1}"));
                lines.push(format!("train.adam_beta2 = {beta2}"));
                lines.push(format!("train.adam_eps = {eps}"));
            }
        }
        lines.join("\n") + "\n"
    }
}
