use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imageio::DatasetManifest;
use crate::model::{ModelConfig, ModelParams, SourceKey};
use crate::pipeline::sample_entry;
use crate::sampling::{SamplerConfig, TangentViewport};
use crate::seed::derive_seed;
use crate::training::optim::{step, TrainState};
use crate::training::{TrainConfig, TrainError};
use crate::Real;

/// One labelled viewport, identified by `(image key, viewport index)`.
#[derive(Debug, Clone)]
pub struct PoolItem<T> {
    pub image_key: String,
    pub index: usize,
    pub viewport: TangentViewport<T>,
    pub target: T,
}

/// Every training viewport, each labelled with its image's MOS.
#[derive(Debug, Clone, Default)]
pub struct ViewportPool<T> {
    pub items: Vec<PoolItem<T>>,
}

impl<T: Real> ViewportPool<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorts items by key so that batching does not depend on insertion order.
    pub(super) fn canonicalize(&mut self) {
        self.items
            .sort_by(|a, b| a.image_key.cmp(&b.image_key).then(a.index.cmp(&b.index)));
    }
}

/// `{step, loss}` line of the loss log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub state: TrainState<T>,
    pub loss_log: Vec<LossRecord>,
    /// Keys owning source rows `0..n`.
    pub sources: Vec<String>,
    pub source_key: SourceKey,
}

/// Distinct source keys in sorted order; position is the source-table row.
pub fn source_keys(manifest: &DatasetManifest, key: SourceKey) -> Vec<String> {
    let mut keys: Vec<String> = manifest.entries.iter().map(|e| key.of(e).to_string()).collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Samples viewports for every manifest entry.
pub fn build_pool<T: Real>(
    manifest: &DatasetManifest,
    sources: &[String],
    key: SourceKey,
    sampler: &SamplerConfig,
) -> Result<ViewportPool<T>, TrainError> {
    let mut items = Vec::new();
    for entry in &manifest.entries {
        let source = sources
            .binary_search(&key.of(entry).to_string())
            .map_err(|_| TrainError::InvalidConfig(format!("{} has no source row", key.of(entry))))?;
        let sampled = sample_entry::<T>(manifest, entry, sampler, source)?;
        debug!(
            "{}: {} of {} regions{}",
            entry.image_path,
            sampled.viewports.len(),
            sampled.n_regions,
            if sampled.baseline_saliency {
                " (baseline saliency)"
            } else {
                ""
            }
        );
        for (index, viewport) in sampled.viewports.into_iter().enumerate() {
            items.push(PoolItem {
                image_key: entry.image_path.clone(),
                index,
                viewport,
                target: T::lit(entry.mos),
            });
        }
    }
    let mut pool = ViewportPool { items };
    pool.canonicalize();
    Ok(pool)
}

/// Runs `config.steps` updates over a fixed pool.
///
/// Each epoch visits the pool in an order drawn from `(seed, epoch)`; the
/// last batch of an epoch may be short.
pub fn train_pool<T: Real>(
    state: &mut TrainState<T>,
    pool: &ViewportPool<T>,
    config: &TrainConfig,
) -> Result<Vec<LossRecord>, TrainError> {
    run_steps(state, config, pool, None)
}

type Resampler<'a, T> = &'a mut dyn FnMut(usize) -> Result<ViewportPool<T>, TrainError>;

/// Pool indices of every batch of one epoch.
///
/// Mixed batches are consecutive chunks of one shuffle of the whole pool.
/// Grouped batches never span two images: images are visited in shuffled
/// order and each one's viewports are chunked separately.
pub(super) fn epoch_batches<T: Real>(pool: &ViewportPool<T>, config: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("epoch{epoch}")));
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    if !config.group_by_image {
        return order.chunks(config.batch_size).map(<[usize]>::to_vec).collect();
    }
    // canonical pools keep each image's items contiguous
    let mut images: Vec<Vec<usize>> = Vec::new();
    for (i, item) in pool.items.iter().enumerate() {
        match images.last_mut() {
            Some(group) if pool.items[group[0]].image_key == item.image_key => group.push(i),
            _ => images.push(vec![i]),
        }
    }
    let rank: Vec<usize> = {
        let mut r = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    for group in images.iter_mut() {
        group.sort_by_key(|&i| rank[i]);
    }
    images.shuffle(&mut rng);
    images
        .iter()
        .flat_map(|g| g.chunks(config.batch_size).map(<[usize]>::to_vec))
        .collect()
}

fn run_steps<T: Real>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    base: &ViewportPool<T>,
    mut resample: Option<Resampler<'_, T>>,
) -> Result<Vec<LossRecord>, TrainError> {
    config.validate()?;
    let mut log = Vec::with_capacity(config.steps);
    if config.steps == 0 {
        return Ok(log);
    }
    if base.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut sorted_base = None;
    if !is_canonical(base) {
        let mut p = base.clone();
        p.canonicalize();
        sorted_base = Some(p);
    }
    let mut resampled: Option<ViewportPool<T>> = None;
    let mut epoch = 0;
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut cursor = 0;
    while log.len() < config.steps {
        if cursor >= batches.len() {
            if !batches.is_empty() {
                epoch += 1;
                if let Some(f) = resample.as_mut() {
                    let mut p = f(epoch)?;
                    p.canonicalize();
                    resampled = Some(p);
                }
            }
            let pool = resampled.as_ref().or(sorted_base.as_ref()).unwrap_or(base);
            if pool.is_empty() {
                return Err(TrainError::EmptyBatch);
            }
            batches = epoch_batches(pool, config, epoch);
            cursor = 0;
        }
        let pool = resampled.as_ref().or(sorted_base.as_ref()).unwrap_or(base);
        let batch: Vec<(&TangentViewport<T>, T)> = batches[cursor]
            .iter()
            .map(|&i| (&pool.items[i].viewport, pool.items[i].target))
            .collect();
        cursor += 1;
        let loss = step(state, &batch, config)?;
        log.push(LossRecord {
            step: state.step,
            loss: loss.to_f64_lossy(),
        });
        if state.step % 100 == 0 {
            info!(
                "step {} loss {:.4} running {:.4}",
                state.step,
                loss,
                state.running_loss.unwrap_or(loss)
            );
        }
    }
    Ok(log)
}

fn is_canonical<T>(pool: &ViewportPool<T>) -> bool {
    pool.items
        .windows(2)
        .all(|w| (&w[0].image_key, w[0].index) <= (&w[1].image_key, w[1].index))
}

/// Full training run: derive source rows, sample the pool, optimise, then
/// reset the unknown source row to the mean of the learned rows.
///
/// `model.n_sources` is replaced by the number of distinct source keys.
pub fn train<T: Real>(
    manifest: &DatasetManifest,
    sampler: &SamplerConfig,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    if manifest.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    config.validate()?;
    sampler.validate().map_err(crate::pipeline::PipelineError::from)?;
    let sources = source_keys(manifest, config.source_key);
    let model = ModelConfig {
        n_sources: sources.len(),
        ..model.clone()
    };
    model.validate_resolution(sampler.resolution)?;
    let params = ModelParams::<T>::init(&model, derive_seed(config.seed, "init"))?;
    let mut state = TrainState::new(params);
    let base = build_pool::<T>(manifest, &sources, config.source_key, sampler)?;
    info!("training on {} viewports from {} images", base.len(), manifest.len());
    let loss_log = if config.resample_per_epoch {
        let mut resample = |epoch: usize| {
            let resampled = SamplerConfig {
                seed: derive_seed(sampler.seed, &format!("epoch{epoch}")),
                ..sampler.clone()
            };
            build_pool(manifest, &sources, config.source_key, &resampled)
        };
        run_steps(&mut state, config, &base, Some(&mut resample))?
    } else {
        train_pool(&mut state, &base, config)?
    };
    state.params.refresh_unknown_source();
    Ok(TrainOutcome {
        state,
        loss_log,
        sources,
        source_key: config.source_key,
    })
}
