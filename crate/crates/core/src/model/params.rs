use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::config::{EncoderKind, ModelConfig, CONV1_CHANNELS, CONV2_CHANNELS};
use crate::model::ModelError;
use crate::Real;

/// Inputs per output of a convolution kernel, or `None` for other tensors.
fn conv_fan_in(name: &str) -> Option<usize> {
    match name {
        "encoder.conv1_w" => Some(9 * 3),
        "encoder.conv2_w" => Some(9 * CONV1_CHANNELS),
        _ => None,
    }
}

/// Patch encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderParams<T> {
    Linear {
        /// `dim × patch_len`
        w: Vec<T>,
        b: Vec<T>,
    },
    Conv {
        /// `16 × 3 × 3 × 3`, laid out `[out][ky][kx][in]`.
        conv1_w: Vec<T>,
        conv1_b: Vec<T>,
        /// `32 × 3 × 3 × 16`.
        conv2_w: Vec<T>,
        conv2_b: Vec<T>,
        /// `dim × conv_features`
        proj_w: Vec<T>,
        proj_b: Vec<T>,
    },
}

/// One pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Vec<T>,
    pub ln1_b: Vec<T>,
    /// Projections are `dim × dim`, output-major.
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
    pub ln2_g: Vec<T>,
    pub ln2_b: Vec<T>,
    /// `mlp_dim × dim`
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `dim × mlp_dim`
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Every learnable tensor of the scorer.
///
/// The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<T>,
    pub cls: Vec<T>,
    /// `max_patches × dim`
    pub positional: Vec<T>,
    /// `dim × 2`: maps normalized (lat, lon) to a token offset.
    pub geometric: Vec<T>,
    /// `(n_sources + 1) × dim`; the last row stands for unseen images.
    pub source: Vec<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_g: Vec<T>,
    pub lnf_b: Vec<T>,
    pub head_w: Vec<T>,
    /// Single element.
    pub head_b: Vec<T>,
}

/// Name and shape of one tensor, in [`ModelParams::tensors`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tensor layout implied by a config.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<TensorSpec> {
    let d = cfg.dim;
    let mut s = Vec::new();
    match cfg.encoder {
        EncoderKind::Linear => {
            s.push(TensorSpec::new("encoder.w", &[d, cfg.patch_len()]));
            s.push(TensorSpec::new("encoder.b", &[d]));
        }
        EncoderKind::Conv => {
            s.push(TensorSpec::new("encoder.conv1_w", &[CONV1_CHANNELS, 3, 3, 3]));
            s.push(TensorSpec::new("encoder.conv1_b", &[CONV1_CHANNELS]));
            s.push(TensorSpec::new(
                "encoder.conv2_w",
                &[CONV2_CHANNELS, 3, 3, CONV1_CHANNELS],
            ));
            s.push(TensorSpec::new("encoder.conv2_b", &[CONV2_CHANNELS]));
            s.push(TensorSpec::new("encoder.proj_w", &[d, cfg.conv_features()]));
            s.push(TensorSpec::new("encoder.proj_b", &[d]));
        }
    }
    s.push(TensorSpec::new("embed.cls", &[d]));
    s.push(TensorSpec::new("embed.positional", &[cfg.max_patches, d]));
    s.push(TensorSpec::new("embed.geometric", &[d, 2]));
    s.push(TensorSpec::new("embed.source", &[cfg.n_sources + 1, d]));
    for l in 0..cfg.layers {
        let p = |n: &str| format!("layer{l}.{n}");
        s.push(TensorSpec::new(p("ln1_g"), &[d]));
        s.push(TensorSpec::new(p("ln1_b"), &[d]));
        for w in ["q", "k", "v", "o"] {
            s.push(TensorSpec::new(p(&format!("attn.w{w}")), &[d, d]));
            s.push(TensorSpec::new(p(&format!("attn.b{w}")), &[d]));
        }
        s.push(TensorSpec::new(p("ln2_g"), &[d]));
        s.push(TensorSpec::new(p("ln2_b"), &[d]));
        s.push(TensorSpec::new(p("mlp.w1"), &[cfg.mlp_dim, d]));
        s.push(TensorSpec::new(p("mlp.b1"), &[cfg.mlp_dim]));
        s.push(TensorSpec::new(p("mlp.w2"), &[d, cfg.mlp_dim]));
        s.push(TensorSpec::new(p("mlp.b2"), &[d]));
    }
    s.push(TensorSpec::new("final.ln_g", &[d]));
    s.push(TensorSpec::new("final.ln_b", &[d]));
    s.push(TensorSpec::new("head.w", &[d]));
    s.push(TensorSpec::new("head.b", &[1]));
    s
}

/// Whether a tensor name is a layer-norm gain (initialized to one).
fn is_gain(name: &str) -> bool {
    name.ends_with("ln1_g") || name.ends_with("ln2_g") || name.ends_with("ln_g")
}

/// Whether a tensor starts at zero: biases, offsets and the CLS token.
fn is_zero_init(name: &str) -> bool {
    let last = name.rsplit('.').next().unwrap_or(name);
    name == "embed.cls" || last.starts_with('b') || last.ends_with("_b") || name == "head.b"
}

impl<T: Real> ModelParams<T> {
    /// Builds parameters from a flat list of tensors in spec order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Vec<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        let specs = tensor_specs(&config);
        if specs.len() != tensors.len() {
            return Err(ModelError::Shape(format!(
                "expected {} tensors, got {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.len() != t.len() {
                return Err(ModelError::Shape(format!(
                    "{} has {} values, expected {}",
                    s.name,
                    t.len(),
                    s.len()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked above");
        let encoder = match config.encoder {
            EncoderKind::Linear => EncoderParams::Linear { w: next(), b: next() },
            EncoderKind::Conv => EncoderParams::Conv {
                conv1_w: next(),
                conv1_b: next(),
                conv2_w: next(),
                conv2_b: next(),
                proj_w: next(),
                proj_b: next(),
            },
        };
        let cls = next();
        let positional = next();
        let geometric = next();
        let source = next();
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                ln1_g: next(),
                ln1_b: next(),
                wq: next(),
                bq: next(),
                wk: next(),
                bk: next(),
                wv: next(),
                bv: next(),
                wo: next(),
                bo: next(),
                ln2_g: next(),
                ln2_b: next(),
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            })
            .collect();
        Ok(Self {
            encoder,
            cls,
            positional,
            geometric,
            source,
            layers,
            lnf_g: next(),
            lnf_b: next(),
            head_w: next(),
            head_b: next(),
            config,
        })
    }

    /// Seeded initialization: N(0, init_std²) for projections and tables,
    /// N(0, 2 / fan_in) for convolution kernels, zero biases and CLS, unit
    /// layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = config.init_std;
        let tensors = tensor_specs(config)
            .iter()
            .map(|s| {
                if is_gain(&s.name) {
                    vec![T::one(); s.len()]
                } else if is_zero_init(&s.name) {
                    vec![T::zero(); s.len()]
                } else {
                    let std = conv_fan_in(&s.name).map_or(std, |fan_in| (2.0 / fan_in as f64).sqrt());
                    (0..s.len())
                        .map(|_| T::lit(std * rng.sample::<f64, _>(StandardNormal)))
                        .collect()
                }
            })
            .collect();
        Self::from_tensors(config.clone(), tensors)
    }

    /// All-zero tensors with this layout.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        let tensors = tensor_specs(config).iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self::from_tensors(config.clone(), tensors)
    }

    /// Tensors in spec order.
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut v: Vec<&Vec<T>> = Vec::new();
        match &self.encoder {
            EncoderParams::Linear { w, b } => v.extend([w, b]),
            EncoderParams::Conv {
                conv1_w,
                conv1_b,
                conv2_w,
                conv2_b,
                proj_w,
                proj_b,
            } => v.extend([conv1_w, conv1_b, conv2_w, conv2_b, proj_w, proj_b]),
        }
        v.extend([&self.cls, &self.positional, &self.geometric, &self.source]);
        for l in &self.layers {
            v.extend([
                &l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1,
                &l.b1, &l.w2, &l.b2,
            ]);
        }
        v.extend([&self.lnf_g, &self.lnf_b, &self.head_w, &self.head_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v: Vec<&mut Vec<T>> = Vec::new();
        match &mut self.encoder {
            EncoderParams::Linear { w, b } => v.extend([w, b]),
            EncoderParams::Conv {
                conv1_w,
                conv1_b,
                conv2_w,
                conv2_b,
                proj_w,
                proj_b,
            } => v.extend([conv1_w, conv1_b, conv2_w, conv2_b, proj_w, proj_b]),
        }
        v.extend([
            &mut self.cls,
            &mut self.positional,
            &mut self.geometric,
            &mut self.source,
        ]);
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        v.extend([&mut self.lnf_g, &mut self.lnf_b, &mut self.head_w, &mut self.head_b]);
        v
    }

    /// Visits `(spec, tensor)` pairs.
    pub fn for_each(&self, mut f: impl FnMut(&TensorSpec, &[T])) {
        let specs = tensor_specs(&self.config);
        for (s, t) in specs.iter().zip(self.tensors()) {
            f(s, t);
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&TensorSpec, &mut Vec<T>)) {
        let specs = tensor_specs(&self.config);
        for (s, t) in specs.iter().zip(self.tensors_mut()) {
            f(s, t);
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm over every value.
    pub fn global_norm(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| *v * *v)
            .sum::<T>()
            .sqrt()
    }

    /// Sets the "unknown source" row to the mean of the learned rows.
    pub fn refresh_unknown_source(&mut self) {
        let d = self.config.dim;
        let n = self.config.n_sources;
        if n == 0 {
            return;
        }
        let mut mean = vec![T::zero(); d];
        for row in self.source[..n * d].chunks_exact(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v;
            }
        }
        let nf = T::of_usize(n);
        for (dst, m) in self.source[n * d..].iter_mut().zip(mean) {
            *dst = m / nf;
        }
    }

    /// Converts every value to another scalar type.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let tensors = self
            .tensors()
            .iter()
            .map(|t| t.iter().map(|v| U::lit(v.to_f64_lossy())).collect())
            .collect();
        ModelParams::from_tensors(self.config.clone(), tensors).expect("same layout")
    }
}
