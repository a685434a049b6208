//! Adam with bias correction and decoupled weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl AdamConfig {
    /// From-scratch training on small synthetic data.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-4,
        }
    }

    /// Learning rate for fine-tuning a pretrained backbone.
    pub fn fine_tune() -> Self {
        Self {
            learning_rate: 1e-6,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: BTreeMap<String, Vec<f64>>,
    pub second_moment: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        }
    }
}

/// One update of every trainable parameter, then gradients are cleared.
///
/// Parameters that received no gradient this step are treated as having a
/// zero gradient. A store with no gradients at all is a usage error.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if !store.iter().any(|(_, p)| p.trainable && p.grad.is_some()) {
        return Err(Error::Usage("adam_step called without populated gradients".into()));
    }
    state.step += 1;
    let AdamConfig {
        learning_rate: lr,
        beta1,
        beta2,
        epsilon,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for (name, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        let n = p.data.len();
        let m = state.first_moment.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.second_moment.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let grad = p.grad.take();
        for i in 0..n {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p.data[i] -= lr * weight_decay * p.data[i];
            p.data[i] -= lr * mhat / (vhat.sqrt() + epsilon);
        }
    }
    Ok(())
}
