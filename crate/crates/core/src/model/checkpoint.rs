//! Versioned JSON checkpoints: config echo, source names, named tensors.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::imageio::ManifestEntry;
use crate::model::params::tensor_specs;
use crate::model::{ModelConfig, ModelError, ModelParams};
use crate::Real;

pub const CHECKPOINT_FORMAT: &str = "panoiqa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Which manifest field identifies a source-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKey {
    /// One row per image file.
    #[default]
    Image,
    /// One row per scene; all distorted versions of a scene share it.
    Scene,
}

impl SourceKey {
    pub fn of<'a>(&self, entry: &'a ManifestEntry) -> &'a str {
        match self {
            SourceKey::Image => &entry.image_path,
            SourceKey::Scene => &entry.scene_id,
        }
    }
}

/// Trained parameters plus the keys that own the source-table rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    /// `sources[i]` is the key whose viewports used source row `i`.
    pub sources: Vec<String>,
    pub source_key: SourceKey,
}

impl<T: Real> Checkpoint<T> {
    /// Source row for a key, or the reserved unknown row.
    pub fn source_index(&self, key: &str) -> usize {
        self.sources
            .iter()
            .position(|s| s == key)
            .unwrap_or(self.params.config.unknown_source())
    }

    /// Source row for a manifest entry under this checkpoint's keying.
    pub fn entry_source(&self, entry: &ManifestEntry) -> usize {
        self.source_index(self.source_key.of(entry))
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    sources: Vec<String>,
    #[serde(default)]
    source_key: SourceKey,
    tensors: Vec<TensorRecord>,
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut tensors = Vec::new();
    ckpt.params.for_each(|spec, data| {
        tensors.push(TensorRecord {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            data: data.iter().map(|v| v.to_f64_lossy()).collect(),
        })
    });
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: ckpt.params.config.clone(),
        sources: ckpt.sources.clone(),
        source_key: ckpt.source_key,
        tensors,
    };
    let json = serde_json::to_vec(&file).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("ckpt")
    ));
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(&json).and_then(|_| f.sync_all()).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })?;
    fs::rename(&tmp, path).map_err(io_err)
}

/// Loads a checkpoint; with `expected`, rejects an architecture mismatch
/// (the source-table size is taken from the file).
pub fn load_checkpoint<T: Real>(
    path: impl AsRef<Path>,
    expected: Option<&ModelConfig>,
) -> Result<Checkpoint<T>, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_slice(&bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format {:?}", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", file.version)));
    }
    if let Some(cfg) = expected {
        if !cfg.same_architecture(&file.config) {
            return Err(ModelError::ConfigMismatch);
        }
    }
    if file.sources.len() > file.config.n_sources {
        return Err(ModelError::Checkpoint("more source names than source rows".into()));
    }
    let specs = tensor_specs(&file.config);
    if specs.len() != file.tensors.len() {
        return Err(ModelError::Shape(format!(
            "checkpoint has {} tensors, config implies {}",
            file.tensors.len(),
            specs.len()
        )));
    }
    let mut tensors = Vec::with_capacity(specs.len());
    for (spec, rec) in specs.iter().zip(file.tensors) {
        if spec.name != rec.name || spec.shape != rec.shape {
            return Err(ModelError::Shape(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                rec.name, rec.shape, spec.name, spec.shape
            )));
        }
        tensors.push(rec.data.into_iter().map(T::lit).collect());
    }
    let params = ModelParams::from_tensors(file.config, tensors)?;
    if !params.all_finite() {
        return Err(ModelError::Checkpoint("non-finite parameter values".into()));
    }
    Ok(Checkpoint {
        params,
        sources: file.sources,
        source_key: file.source_key,
    })
}
