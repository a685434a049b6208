//! Joint saliency loss: ε-regularized KL divergence minus weighted CC and NSS.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// CC weight.
    pub alpha: f64,
    /// NSS weight.
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            epsilon: 1e-7,
        }
    }
}

impl LossConfig {
    /// Weights for training from scratch on sparse fixations (three single
    /// pixels per frame): at β = 0.1 the unbounded NSS reward outweighs the
    /// KL term and the model learns spikes at the fixation pixels, so the
    /// NSS term is dropped. NSS is still reported as a metric.
    pub fn desk() -> Self {
        Self {
            beta: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("loss needs epsilon > 0 and alpha, beta ≥ 0".into()));
        }
        Ok(())
    }
}

pub struct LossOutput {
    pub total: Tensor,
    pub kld_term: f64,
    /// `−α·CC`, zero when either map is constant.
    pub cc_term: f64,
    /// `−β·NSS`, zero when the prediction is constant or there are no fixations.
    pub nss_term: f64,
}

/// Population mean and standard deviation of a whole tensor, on the graph.
fn moments(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let mean = x.mean_all();
    let centered = x.sub(&mean)?;
    let var = centered.square().mean_all();
    Ok((centered, var.sqrt()?))
}

/// A spread this small relative to the values is rounding noise.
fn is_flat(std: f64, values: &[f64]) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    std <= 1e-12 * scale.max(f64::MIN_POSITIVE)
}

/// Loss of prediction `y_hat` against saliency `y` (sum 1) and binary
/// fixations `p`. Differentiable with respect to `y_hat`.
pub fn joint_loss(y_hat: &Tensor, y: &Tensor, p: &Tensor, cfg: &LossConfig) -> Result<LossOutput> {
    if y_hat.shape() != y.shape() || y.shape() != p.shape() {
        return Err(shape_err!(
            "loss maps disagree: {:?}, {:?}, {:?}",
            y_hat.shape(),
            y.shape(),
            p.shape()
        ));
    }
    let eps = cfg.epsilon;
    let yd = y.detach();

    // Σ Y·log(ε + Y/(ε + Ŷn)) with Ŷn the prediction normalized to sum 1
    let total_mass = y_hat.sum_all();
    if total_mass.item() <= 0.0 {
        return Err(Error::Domain("prediction has no mass".into()));
    }
    let y_norm = y_hat.div(&total_mass)?;
    let ratio = yd.div(&y_norm.add_scalar(eps))?;
    let kld = yd.mul(&ratio.add_scalar(eps).log()?)?.sum_all();
    let mut total = kld.clone();

    let (pred_c, pred_std) = moments(y_hat)?;
    let y_mean = yd.data().iter().sum::<f64>() / yd.numel() as f64;
    let y_std = (yd.data().iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / yd.numel() as f64).sqrt();

    let pred_flat = is_flat(pred_std.item(), y_hat.data());
    let mut cc_term = 0.0;
    if pred_flat || is_flat(y_std, yd.data()) {
        warn!("constant map in loss; CC term set to 0");
    } else if cfg.alpha != 0.0 {
        let y_c = yd.add_scalar(-y_mean);
        let cov = pred_c.mul(&y_c)?.mean_all();
        let cc = cov.div(&pred_std)?.scale(1.0 / y_std);
        let term = cc.scale(-cfg.alpha);
        cc_term = term.item();
        total = total.add(&term)?;
    }

    let mut nss_term = 0.0;
    let fix_count: f64 = p.data().iter().sum();
    if fix_count == 0.0 {
        warn!("no fixations; NSS term set to 0");
    } else if pred_flat {
        warn!("constant prediction; NSS term set to 0");
    } else if cfg.beta != 0.0 {
        let standardized = pred_c.div(&pred_std)?;
        let nss = standardized.mul(&p.detach())?.sum_all().scale(1.0 / fix_count);
        let term = nss.scale(-cfg.beta);
        nss_term = term.item();
        total = total.add(&term)?;
    }

    Ok(LossOutput {
        kld_term: kld.item(),
        total,
        cc_term,
        nss_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> Tensor {
        Tensor::new(vec![2, v.len() / 2], v.to_vec()).unwrap()
    }

    #[test]
    fn perfect_prediction_terms() {
        let y = map(&[0.1, 0.2, 0.3, 0.4]);
        let p = map(&[0.0, 0.0, 0.0, 1.0]);
        let cfg = LossConfig::default();
        let out = joint_loss(&y, &y, &p, &cfg).unwrap();
        assert!(out.kld_term < 1e-6);
        assert!((out.cc_term + cfg.alpha).abs() < 1e-9);

        let mean = 0.25;
        let std = ([0.1f64, 0.2, 0.3, 0.4]
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / 4.0)
            .sqrt();
        assert!((out.nss_term + cfg.beta * (0.4 - mean) / std).abs() < 1e-9);
    }

    #[test]
    fn constant_prediction_keeps_kld_only() {
        let y = map(&[0.1, 0.2, 0.3, 0.4]);
        let p = map(&[0.0, 0.0, 0.0, 1.0]);
        let out = joint_loss(&Tensor::full(&[2, 2], 0.5), &y, &p, &LossConfig::default()).unwrap();
        assert_eq!(out.cc_term, 0.0);
        assert_eq!(out.nss_term, 0.0);
        assert_eq!(out.total.item(), out.kld_term);
    }

    #[test]
    fn no_fixations_drops_nss() {
        let y = map(&[0.1, 0.2, 0.3, 0.4]);
        let out = joint_loss(
            &map(&[0.2, 0.1, 0.4, 0.3]),
            &y,
            &Tensor::zeros(&[2, 2]),
            &LossConfig::default(),
        )
        .unwrap();
        assert_eq!(out.nss_term, 0.0);
        assert!(out.cc_term != 0.0);
    }
}
