use crate::model::{ModelParams, ViewportForward};
use crate::sampling::TangentViewport;
use crate::training::{Optimizer, TrainConfig, TrainError};
use crate::Real;

/// Mean absolute error.
pub fn mae_loss<T: Real>(preds: &[T], targets: &[T]) -> Result<T, TrainError> {
    if preds.len() != targets.len() {
        return Err(TrainError::LengthMismatch {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let total: T = preds.iter().zip(targets).map(|(p, t)| (*p - *t).abs()).sum();
    Ok(total / T::of_usize(preds.len()))
}

/// Subgradient of `|r|`, taking 0 at `r = 0`.
fn sign<T: Real>(r: T) -> T {
    if r > T::zero() {
        T::one()
    } else if r < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Loss, predictions and parameter gradient of one batch.
#[derive(Debug, Clone)]
pub struct BatchGradient<T> {
    pub loss: T,
    pub predictions: Vec<T>,
    pub grads: ModelParams<T>,
}

/// Gradient of the batch MAE with respect to every parameter.
///
/// Viewports are processed in order and accumulated in that order, so the
/// result is bit-reproducible.
pub fn backward<T: Real>(
    batch: &[(&TangentViewport<T>, T)],
    params: &ModelParams<T>,
) -> Result<BatchGradient<T>, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let passes = batch
        .iter()
        .map(|(vp, _)| ViewportForward::run(vp, params))
        .collect::<Result<Vec<_>, _>>()?;
    let predictions: Vec<T> = passes.iter().map(|p| p.score).collect();
    let targets: Vec<T> = batch.iter().map(|(_, t)| *t).collect();
    let loss = mae_loss(&predictions, &targets)?;
    let inv_n = T::one() / T::of_usize(batch.len());
    let mut grads = params.zeros_like();
    for (pass, target) in passes.iter().zip(&targets) {
        let dscore = sign(pass.score - *target) * inv_n;
        if dscore != T::zero() {
            pass.backward(dscore, params, &mut grads);
        }
    }
    if !grads.all_finite() {
        return Err(TrainError::NonFiniteGradient);
    }
    Ok(BatchGradient {
        loss,
        predictions,
        grads,
    })
}

/// Parameters plus optimizer state.
///
/// Updates go through `&mut self`, so concurrent mutation cannot compile.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub params: ModelParams<T>,
    first_moment: Option<ModelParams<T>>,
    second_moment: Option<ModelParams<T>>,
    pub step: usize,
    /// Exponential moving average of batch losses (factor 0.9).
    pub running_loss: Option<T>,
}

impl<T: Real> TrainState<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        Self {
            params,
            first_moment: None,
            second_moment: None,
            step: 0,
            running_loss: None,
        }
    }

    /// Applies a precomputed gradient. On a non-finite result the state is
    /// untouched.
    pub fn apply_gradient(&mut self, grads: &ModelParams<T>, config: &TrainConfig) -> Result<(), TrainError> {
        if !grads.all_finite() {
            return Err(TrainError::NonFiniteGradient);
        }
        let mut scale = T::one();
        if let Some(max_norm) = config.grad_clip {
            let norm = grads.global_norm();
            let max_norm = T::lit(max_norm);
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        let lr = T::lit(config.learning_rate);
        let mut params = self.params.clone();
        let t = self.step + 1;
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    for (pv, gv) in p.iter_mut().zip(g) {
                        *pv -= lr * scale * *gv;
                    }
                }
                self.commit(params, None, None)
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let mut m = self.first_moment.clone().unwrap_or_else(|| grads.zeros_like());
                let mut v = self.second_moment.clone().unwrap_or_else(|| grads.zeros_like());
                let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
                let c1 = T::one() - T::lit(beta1.powi(t as i32));
                let c2 = T::one() - T::lit(beta2.powi(t as i32));
                let tensors = params
                    .tensors_mut()
                    .into_iter()
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                    .zip(grads.tensors());
                for (((p, mt), vt), g) in tensors {
                    for i in 0..p.len() {
                        let gi = g[i] * scale;
                        mt[i] = b1 * mt[i] + (T::one() - b1) * gi;
                        vt[i] = b2 * vt[i] + (T::one() - b2) * gi * gi;
                        let mhat = mt[i] / c1;
                        let vhat = vt[i] / c2;
                        p[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
                self.commit(params, Some(m), Some(v))
            }
        }
    }

    fn commit(
        &mut self,
        params: ModelParams<T>,
        m: Option<ModelParams<T>>,
        v: Option<ModelParams<T>>,
    ) -> Result<(), TrainError> {
        if !params.all_finite() {
            return Err(TrainError::NonFiniteUpdate);
        }
        self.params = params;
        if m.is_some() {
            self.first_moment = m;
            self.second_moment = v;
        }
        self.step += 1;
        Ok(())
    }

    fn record_loss(&mut self, loss: T) {
        let k = T::lit(0.9);
        self.running_loss = Some(match self.running_loss {
            Some(r) => k * r + (T::one() - k) * loss,
            None => loss,
        });
    }
}

/// One optimizer update on `batch`; returns the batch loss before the update.
pub fn step<T: Real>(
    state: &mut TrainState<T>,
    batch: &[(&TangentViewport<T>, T)],
    config: &TrainConfig,
) -> Result<T, TrainError> {
    let bg = backward(batch, &state.params)?;
    state.apply_gradient(&bg.grads, config)?;
    state.record_loss(bg.loss);
    Ok(bg.loss)
}
