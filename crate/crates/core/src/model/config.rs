use serde::{Deserialize, Serialize};

use crate::model::{Activation, ModelError};

/// Conv encoder channel widths.
pub const CONV1_CHANNELS: usize = 16;
pub const CONV2_CHANNELS: usize = 32;

/// Patch encoder flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Flatten the patch and apply one affine map.
    Linear,
    /// Two 3×3 conv + activation + 2×2 average pool stages, then affine.
    #[default]
    Conv,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token width.
    pub dim: usize,
    pub patch_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    /// Rows of the source table, excluding the reserved "unknown" row.
    pub n_sources: usize,
    pub max_patches: usize,
    pub encoder: EncoderKind,
    pub activation: Activation,
    /// Add the geometric embedding of the viewport center.
    pub geometric_embedding: bool,
    /// Add the per-image source embedding.
    pub source_embedding: bool,
    /// Standard deviation of the normal initializer for weight matrices and tables.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Desk-scale configuration.
    pub fn toy() -> Self {
        Self {
            dim: 64,
            patch_size: 8,
            layers: 2,
            heads: 2,
            mlp_dim: 128,
            n_sources: 0,
            max_patches: 64,
            encoder: EncoderKind::Conv,
            activation: Activation::Gelu,
            geometric_embedding: true,
            source_embedding: true,
            init_std: 0.02,
        }
    }

    /// Full-size transformer: 384-wide tokens, 32-pixel patches, 14 layers,
    /// 6 heads, 1152-wide MLP; sized for 224-pixel viewports.
    pub fn full() -> Self {
        Self {
            dim: 384,
            patch_size: 32,
            layers: 14,
            heads: 6,
            mlp_dim: 1152,
            max_patches: 49,
            ..Self::toy()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Length of a flattened RGB patch.
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    /// Features entering the conv encoder's final affine map.
    pub fn conv_features(&self) -> usize {
        let s = self.patch_size / 4;
        s * s * CONV2_CHANNELS
    }

    /// Row of the source table used for images without a learned row.
    pub fn unknown_source(&self) -> usize {
        self.n_sources
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.dim == 0 || self.heads == 0 || self.patch_size == 0 {
            return bad("model.dim, model.heads and model.patch_size must be positive".into());
        }
        if self.dim % self.heads != 0 {
            return bad(format!(
                "model.dim = {} is not divisible by model.heads = {}",
                self.dim, self.heads
            ));
        }
        if self.mlp_dim < self.dim {
            return bad(format!(
                "model.mlp_dim = {} must be >= model.dim = {}",
                self.mlp_dim, self.dim
            ));
        }
        if self.max_patches == 0 {
            return bad("model.max_patches must be positive".into());
        }
        if self.encoder == EncoderKind::Conv && self.patch_size % 4 != 0 {
            return bad(format!(
                "model.patch_size = {} must be a multiple of 4 for the conv encoder",
                self.patch_size
            ));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad("model.init_std must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Checks a viewport resolution against the patch grid.
    pub fn validate_resolution(&self, resolution: usize) -> Result<usize, ModelError> {
        if resolution % self.patch_size != 0 {
            return Err(ModelError::IndivisibleResolution {
                resolution,
                patch: self.patch_size,
            });
        }
        let n = (resolution / self.patch_size).pow(2);
        if n > self.max_patches {
            return Err(ModelError::TooManyPatches {
                patches: n,
                max: self.max_patches,
            });
        }
        Ok(n)
    }

    /// Equal up to `n_sources`, which is set by the training data.
    pub fn same_architecture(&self, other: &Self) -> bool {
        Self {
            n_sources: 0,
            ..self.clone()
        } == Self {
            n_sources: 0,
            ..other.clone()
        }
    }
}
