//! Training loop: one clip per Adam step, clips visited in seeded epochs.

use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_inputs, ClipSample};
use crate::error::{Error, Result};
use crate::loss::{joint_loss, LossConfig};
use crate::model::{forward_clip, ClipInputs, ForwardOptions, ModelConfig};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::{ParamScope, ParamStore};
use crate::tensor::{NormMode, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    /// Steps between progress log lines; 0 disables them.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            seed: 0,
            loss: LossConfig::desk(),
            optimizer: AdamConfig::default(),
            log_every: 100,
        }
    }
}

/// A clip converted to model inputs and target tensors.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub clip_id: u32,
    pub inputs: ClipInputs,
    pub saliency: Tensor,
    pub fixations: Tensor,
}

impl PreparedClip {
    pub fn new(sample: &ClipSample, cfg: &ModelConfig) -> Result<Self> {
        let size = cfg.encoder.image_size;
        if sample.height != size || sample.width != size {
            return Err(Error::Config(format!(
                "clip {} is {}×{}, model expects {size}×{size}",
                sample.clip_id, sample.height, sample.width
            )));
        }
        if sample.clip_len() < cfg.clip_len {
            return Err(Error::Config(format!(
                "clip {} has {} input frames, model expects {}",
                sample.clip_id,
                sample.clip_len(),
                cfg.clip_len
            )));
        }
        let shape = vec![sample.height, sample.width];
        Ok(Self {
            clip_id: sample.clip_id,
            inputs: normalize_inputs(sample, &cfg.info_types)?,
            saliency: Tensor::new(shape.clone(), sample.saliency.clone())?,
            fixations: Tensor::new(shape, sample.fixations.clone())?,
        })
    }
}

pub fn prepare(samples: &[ClipSample], cfg: &ModelConfig) -> Result<Vec<PreparedClip>> {
    samples.iter().map(|s| PreparedClip::new(s, cfg)).collect()
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub kld_term: f64,
    pub cc_term: f64,
    pub nss_term: f64,
    pub wall_ms: f64,
}

/// Clip index used at `step`: each epoch is a fresh seeded permutation, so
/// the order depends only on `(seed, step)` and resuming is seamless.
pub fn clip_for_step(seed: u64, step: usize, n: usize) -> usize {
    let epoch = step / n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    order.shuffle(&mut rng);
    order[step % n]
}

fn norms_summary(store: &ParamStore) -> String {
    let mut norms = store.norms();
    norms.sort_by(|a, b| b.1.total_cmp(&a.1));
    norms
        .iter()
        .take(8)
        .map(|(n, v)| format!("{n}={v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Forward, backward and one Adam update on a single clip.
pub fn train_step(
    store: &mut ParamStore,
    adam: &mut AdamState,
    model: &ModelConfig,
    clip: &PreparedClip,
    loss_cfg: &LossConfig,
    step: usize,
) -> Result<StepRecord> {
    let start = Instant::now();
    let update = {
        let scope = ParamScope::new(store, true);
        let opts = ForwardOptions {
            norm: NormMode::Train,
            suppressed: Vec::new(),
        };
        let out = forward_clip(&clip.inputs, model, &scope, &opts)?;
        let loss = match joint_loss(&out.prediction, &clip.saliency, &clip.fixations, loss_cfg) {
            Ok(l) => l,
            Err(Error::Domain(reason)) => {
                return Err(Error::NonFinite {
                    step,
                    reason,
                    norms: norms_summary(store),
                })
            }
            Err(e) => return Err(e),
        };
        let value = loss.total.item();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                step,
                reason: format!("loss is {value}"),
                norms: norms_summary(store),
            });
        }
        loss.total.backward()?;
        let terms = (value, loss.kld_term, loss.cc_term, loss.nss_term);
        (scope.finish(), terms)
    };
    let (scope_update, (loss, kld_term, cc_term, nss_term)) = update;
    if scope_update.grads.values().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            step,
            reason: "non-finite gradient".into(),
            norms: norms_summary(store),
        });
    }
    store.accumulate(scope_update);
    adam_step(store, adam)?;
    Ok(StepRecord {
        step,
        loss,
        kld_term,
        cc_term,
        nss_term,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run steps `adam.step .. cfg.steps`, calling `on_step` after each one.
pub fn train<F>(
    data: &[PreparedClip],
    model: &ModelConfig,
    store: &mut ParamStore,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    mut on_step: F,
) -> Result<Vec<StepRecord>>
where
    F: FnMut(&StepRecord, &ParamStore, &AdamState) -> Result<()>,
{
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    model.validate()?;
    cfg.loss.validate()?;
    let mut log = Vec::new();
    for step in adam.step as usize..cfg.steps {
        let clip = &data[clip_for_step(cfg.seed, step, data.len())];
        let rec = train_step(store, adam, model, clip, &cfg.loss, step)?;
        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            info!(
                "step {:>5} loss {:.5} kld {:.4} cc {:.4} nss {:.4} ({:.0} ms)",
                step + 1,
                rec.loss,
                rec.kld_term,
                rec.cc_term,
                rec.nss_term,
                rec.wall_ms
            );
        }
        on_step(&rec, store, adam)?;
        log.push(rec);
    }
    Ok(log)
}
