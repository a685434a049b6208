use super::Tensor;
use crate::error::{shape_err, Result};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    #[default]
    Train,
    Eval,
}

pub struct BatchNormOutput {
    pub output: Tensor,
    /// Updated (mean, var) in train mode.
    pub running: Option<(Vec<f64>, Vec<f64>)>,
}

impl Tensor {
    /// Per-channel normalization of a single `C×H×W` sample.
    ///
    /// Train mode normalizes with the sample's own spatial statistics
    /// (population variance) and returns running stats blended with
    /// `momentum`; eval mode uses the running stats as constants.
    pub fn batchnorm2d(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        running_mean: &[f64],
        running_var: &[f64],
        mode: NormMode,
        momentum: f64,
    ) -> Result<BatchNormOutput> {
        let &[c, h, w] = self.shape() else {
            return Err(shape_err!("batchnorm2d needs C×H×W, got {:?}", self.shape()));
        };
        if gamma.shape() != [c] || beta.shape() != [c] || running_mean.len() != c || running_var.len() != c {
            return Err(shape_err!("batchnorm2d parameters must have {} entries", c));
        }
        let hw = h * w;
        let x = self.data();
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            NormMode::Train => (0..c)
                .map(|ch| {
                    let s = &x[ch * hw..(ch + 1) * hw];
                    let m = s.iter().sum::<f64>() / hw as f64;
                    let v = s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / hw as f64;
                    (m, v)
                })
                .unzip(),
            NormMode::Eval => (running_mean.to_vec(), running_var.to_vec()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for ch in 0..c {
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for i in ch * hw..(ch + 1) * hw {
                xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                out[i] = g * xhat[i] + b;
            }
        }
        let running = (mode == NormMode::Train).then(|| {
            let blend = |old: &[f64], new: &[f64]| -> Vec<f64> {
                old.iter()
                    .zip(new)
                    .map(|(o, n)| (1.0 - momentum) * o + momentum * n)
                    .collect()
            };
            (blend(running_mean, &mean), blend(running_var, &var))
        });

        let (gm, bt) = (gamma.clone(), beta.clone());
        let input_grad = self.requires_grad();
        let output = Tensor::from_op(
            vec![c, h, w],
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = input_grad.then(|| vec![0.0; c * hw]);
                for ch in 0..c {
                    let r = ch * hw..(ch + 1) * hw;
                    let (mut sg, mut sgx) = (0.0, 0.0);
                    for i in r.clone() {
                        sg += g[i];
                        sgx += g[i] * xhat[i];
                    }
                    dgamma[ch] = sgx;
                    dbeta[ch] = sg;
                    if let Some(dx) = dx.as_mut() {
                        let gv = gm.data()[ch];
                        match mode {
                            NormMode::Train => {
                                let n = hw as f64;
                                for i in r {
                                    dx[i] = gv * inv_std[ch] / n * (n * g[i] - sg - xhat[i] * sgx);
                                }
                            }
                            NormMode::Eval => {
                                for i in r {
                                    dx[i] = gv * inv_std[ch] * g[i];
                                }
                            }
                        }
                    }
                }
                vec![
                    dx,
                    gm.requires_grad().then_some(dgamma),
                    bt.requires_grad().then_some(dbeta),
                ]
            },
        );
        Ok(BatchNormOutput { output, running })
    }

    /// LayerNorm over the last axis of an `N×d` matrix.
    pub fn layernorm(&self, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
        let &[n, d] = self.shape() else {
            return Err(shape_err!("layernorm needs N×d, got {:?}", self.shape()));
        };
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(shape_err!("layernorm parameters must have {} entries", d));
        }
        let x = self.data();
        let mut xhat = vec![0.0; n * d];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            let row = &x[r * d..(r + 1) * d];
            let m = row.iter().sum::<f64>() / d as f64;
            let v = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d as f64;
            let is = 1.0 / (v + NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - m) * is;
                xhat[r * d + j] = xh;
                out[r * d + j] = gamma.data()[j] * xh + beta.data()[j];
            }
        }
        let (gm, bt) = (gamma.clone(), beta.clone());
        let input_grad = self.requires_grad();
        Ok(Tensor::from_op(
            vec![n, d],
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let gv = gm.data();
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut dx = input_grad.then(|| vec![0.0; n * d]);
                for r in 0..n {
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for j in 0..d {
                        let i = r * d + j;
                        dgamma[j] += g[i] * xhat[i];
                        dbeta[j] += g[i];
                        let dxh = g[i] * gv[j];
                        s1 += dxh;
                        s2 += dxh * xhat[i];
                    }
                    if let Some(dx) = dx.as_mut() {
                        let dn = d as f64;
                        for j in 0..d {
                            let i = r * d + j;
                            let dxh = g[i] * gv[j];
                            dx[i] = inv_std[r] / dn * (dn * dxh - s1 - xhat[i] * s2);
                        }
                    }
                }
                vec![
                    dx,
                    gm.requires_grad().then_some(dgamma),
                    bt.requires_grad().then_some(dbeta),
                ]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(c: usize, g: f64, b: f64) -> (Tensor, Tensor) {
        (Tensor::full(&[c], g), Tensor::full(&[c], b))
    }

    #[test]
    fn constant_channel_yields_beta() {
        let x = Tensor::full(&[1, 2, 2], 3.7);
        let (g, b) = affine(1, 2.0, 0.25);
        let out = x.batchnorm2d(&g, &b, &[0.0], &[1.0], NormMode::Train, 0.1).unwrap();
        assert!(out.output.data().iter().all(|&v| v == 0.25));
        let (m, v) = out.running.unwrap();
        assert!((m[0] - 0.37).abs() < 1e-12);
        assert!((v[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn plus_minus_one_normalizes_to_itself() {
        let x = Tensor::new(vec![1, 1, 2], vec![-1.0, 1.0]).unwrap();
        let (g, b) = affine(1, 1.0, 0.0);
        let out = x.batchnorm2d(&g, &b, &[0.0], &[1.0], NormMode::Train, 0.1).unwrap();
        let expected = 1.0 / (1.0 + NORM_EPS).sqrt();
        assert!((out.output.data()[0] + expected).abs() < 1e-15);
        assert!((out.output.data()[1] - expected).abs() < 1e-15);
        assert!((out.output.data()[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn eval_mode_with_unit_stats_is_affine() {
        let x = Tensor::new(vec![1, 1, 3], vec![-2.0, 0.5, 4.0]).unwrap();
        let (g, b) = affine(1, 1.0, 0.0);
        let out = x.batchnorm2d(&g, &b, &[0.0], &[1.0], NormMode::Eval, 0.1).unwrap();
        assert!(out.running.is_none());
        for (o, i) in out.output.data().iter().zip(x.data()) {
            assert!((o - i).abs() < 1e-4);
        }
    }

    #[test]
    fn layernorm_rows_are_standardized() {
        let x = Tensor::new(vec![2, 4], vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0]).unwrap();
        let (g, b) = affine(4, 1.0, 0.0);
        let y = x.layernorm(&g, &b).unwrap();
        for r in 0..2 {
            let row = &y.data()[r * 4..(r + 1) * 4];
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
