//! MAE training of the viewport scorer with exact reverse-mode gradients.

mod optim;
mod pool;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{backward, mae_loss, step, BatchGradient, TrainState};
pub use pool::{build_pool, source_keys, train, train_pool, LossRecord, PoolItem, TrainOutcome, ViewportPool};

use crate::model::{ModelError, SourceKey};
use crate::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("predictions ({preds}) and targets ({targets}) differ in length")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("training manifest is empty")]
    EmptyManifest,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("update produced non-finite parameters; state left unchanged")]
    NonFiniteUpdate,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Viewports per step.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Maximum global gradient norm.
    pub grad_clip: Option<f64>,
    /// Draw fresh viewports every epoch instead of sampling once.
    pub resample_per_epoch: bool,
    /// Manifest field that selects each viewport's source-table row.
    pub source_key: SourceKey,
    /// Build every batch from the viewports of a single image.
    #[serde(default)]
    pub group_by_image: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 1000,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::default(),
            grad_clip: None,
            resample_per_epoch: false,
            source_key: SourceKey::default(),
            group_by_image: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "train.learning_rate = {} must be finite and >= 0",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("train.grad_clip = {c} must be positive"));
            }
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                return bad("adam needs 0 <= beta1, beta2 < 1 and eps > 0".into());
            }
        }
        Ok(())
    }
}
