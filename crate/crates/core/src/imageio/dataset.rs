//! JSON-lines dataset manifests and the scene-level train/test split.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("manifest line {line}: duplicate image_path {path}")]
    DuplicatePath { line: usize, path: String },
    #[error("split needs at least 2 distinct scenes, found {0}")]
    TooFewScenes(usize),
    #[error("train fraction {0} must lie in (0, 1)")]
    InvalidFraction(f64),
}

/// One image of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_path: Option<String>,
    pub mos: f64,
    pub distortion_label: String,
    pub scene_id: String,
}

impl ManifestEntry {
    fn validate(&self) -> Result<(), String> {
        if self.image_path.is_empty() {
            return Err("image_path is empty".into());
        }
        if matches!(&self.saliency_path, Some(p) if p.is_empty()) {
            return Err("saliency_path is empty".into());
        }
        if !self.mos.is_finite() {
            return Err("mos is not finite".into());
        }
        if self.scene_id.is_empty() {
            return Err("scene_id is empty".into());
        }
        Ok(())
    }
}

/// Parsed manifest. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            base_dir: base_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    /// Distinct scene ids in sorted order.
    pub fn scenes(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.scene_id.as_str()).collect()
    }

    /// Same entries with every path resolved against `base_dir`.
    pub fn with_resolved_paths(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                image_path: self.resolve(&e.image_path).to_string_lossy().into_owned(),
                saliency_path: e
                    .saliency_path
                    .as_ref()
                    .map(|p| self.resolve(p).to_string_lossy().into_owned()),
                ..e.clone()
            })
            .collect();
        Self {
            entries,
            base_dir: PathBuf::new(),
        }
    }

    /// Same entries re-expressed relative to `new_base`.
    ///
    /// Absolute paths are kept as written. Relative paths keep pointing at the
    /// same files but no longer depend on where the dataset lives, which
    /// matters because paths key the per-image seeds and source rows.
    pub fn rebased(&self, new_base: &Path) -> Self {
        let rebase = |p: &str| -> String {
            if Path::new(p).is_absolute() {
                return p.to_string();
            }
            let target = std::path::absolute(self.resolve(p));
            let base = std::path::absolute(new_base);
            match (target, base) {
                (Ok(t), Ok(b)) => pathdiff::diff_paths(&t, &b).unwrap_or(t),
                _ => self.resolve(p),
            }
            .to_string_lossy()
            .into_owned()
        };
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                image_path: rebase(&e.image_path),
                saliency_path: e.saliency_path.as_deref().map(rebase),
                ..e.clone()
            })
            .collect();
        Self {
            entries,
            base_dir: new_base.to_path_buf(),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                line: line_no,
                reason: e.to_string(),
            })?;
            entry
                .validate()
                .map_err(|reason| DatasetError::Parse { line: line_no, reason })?;
            if !seen.insert(entry.image_path.clone()) {
                return Err(DatasetError::DuplicatePath {
                    line: line_no,
                    path: entry.image_path,
                });
            }
            entries.push(entry);
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => DatasetError::NotFound(path.to_path_buf()),
        _ => DatasetError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = std::path::absolute(&base).unwrap_or(base);
    DatasetManifest::parse(&text, base)
}

/// Writes entries with relative paths rebased onto the file's directory, so
/// the manifest stays valid and location-independent.
pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    fs::write(path, manifest.rebased(dir).to_jsonl()).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Splits by scene: every distorted version of a scene lands on one side.
///
/// The first `ceil(fraction * n_scenes)` shuffled scenes go to train, capped
/// so the test side keeps at least one scene.
pub fn split_dataset(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let mut scenes: Vec<&str> = manifest.scenes().into_iter().collect();
    let n = scenes.len();
    if n < 2 {
        return Err(DatasetError::TooFewScenes(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenes.shuffle(&mut rng);
    let n_train = ((train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let train_scenes: HashSet<&str> = scenes[..n_train].iter().copied().collect();
    let (train, test): (Vec<_>, Vec<_>) = manifest
        .entries
        .iter()
        .cloned()
        .partition(|e| train_scenes.contains(e.scene_id.as_str()));
    Ok((
        DatasetManifest::new(train, manifest.base_dir.clone()),
        DatasetManifest::new(test, manifest.base_dir.clone()),
    ))
}
