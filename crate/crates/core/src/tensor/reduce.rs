use super::Tensor;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

/// Split `shape` around `axis` into (outer, len, inner).
fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(shape_err!("axis {} out of range for shape {:?}", axis, shape));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

impl Tensor {
    pub fn reduce(&self, op: ReduceOp, axis: Option<usize>) -> Result<Tensor> {
        match axis {
            None => Ok(self.reduce_all(op)),
            Some(axis) => self.reduce_axis(op, axis),
        }
    }

    fn reduce_all(&self, op: ReduceOp) -> Tensor {
        let n = self.numel();
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                let scale = if op == ReduceOp::Mean { 1.0 / n as f64 } else { 1.0 };
                let s: f64 = self.data().iter().sum::<f64>() * scale;
                Tensor::from_op(Vec::new(), vec![s], vec![self.clone()], move |g| {
                    vec![Some(vec![g[0] * scale; n])]
                })
            }
            ReduceOp::Max => {
                let (arg, &m) = self
                    .data()
                    .iter()
                    .enumerate()
                    .fold(
                        (0, &f64::NEG_INFINITY),
                        |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc },
                    );
                Tensor::from_op(Vec::new(), vec![m], vec![self.clone()], move |g| {
                    let mut dx = vec![0.0; n];
                    dx[arg] = g[0];
                    vec![Some(dx)]
                })
            }
        }
    }

    fn reduce_axis(&self, op: ReduceOp, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = split_axis(self.shape(), axis)?;
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += x[base + i];
                        }
                    }
                }
                if op == ReduceOp::Mean {
                    let s = 1.0 / len as f64;
                    out.iter_mut().for_each(|v| *v *= s);
                }
            }
            ReduceOp::Max => {
                argmax = vec![0usize; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = 0;
                        for l in 0..len {
                            let v = x[(o * len + l) * inner + i];
                            if v > best {
                                best = v;
                                arg = l;
                            }
                        }
                        out[o * inner + i] = best;
                        argmax[o * inner + i] = arg;
                    }
                }
            }
        }
        let n = self.numel();
        Ok(Tensor::from_op(shape, out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n];
            match op {
                ReduceOp::Sum | ReduceOp::Mean => {
                    let s = if op == ReduceOp::Mean { 1.0 / len as f64 } else { 1.0 };
                    for o in 0..outer {
                        for l in 0..len {
                            let base = (o * len + l) * inner;
                            for i in 0..inner {
                                dx[base + i] = g[o * inner + i] * s;
                            }
                        }
                    }
                }
                ReduceOp::Max => {
                    for o in 0..outer {
                        for i in 0..inner {
                            let l = argmax[o * inner + i];
                            dx[(o * len + l) * inner + i] = g[o * inner + i];
                        }
                    }
                }
            }
            vec![Some(dx)]
        }))
    }

    pub fn sum_all(&self) -> Tensor {
        self.reduce_all(ReduceOp::Sum)
    }

    pub fn mean_all(&self) -> Tensor {
        self.reduce_all(ReduceOp::Mean)
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(ReduceOp::Sum, axis)
    }

    /// Channel-axis pooling of a `C×H×W` map into `1×H×W`.
    pub fn pool_channel(&self, kind: PoolKind) -> Result<Tensor> {
        let &[c, h, w] = self.shape() else {
            return Err(shape_err!("pool_channel needs C×H×W, got {:?}", self.shape()));
        };
        debug_assert!(c >= 1);
        let op = match kind {
            PoolKind::Avg => ReduceOp::Mean,
            PoolKind::Max => ReduceOp::Max,
        };
        self.reduce_axis(op, 0)?.reshape(&[1, h, w])
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, len, inner) = split_axis(self.shape(), axis)?;
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |l: usize| (o * len + l) * inner + i;
                let m = (0..len).map(|l| x[idx(l)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for l in 0..len {
                    let e = (x[idx(l)] - m).exp();
                    y[idx(l)] = e;
                    s += e;
                }
                for l in 0..len {
                    y[idx(l)] /= s;
                }
            }
        }
        let out = y.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            move |g| {
                let mut dx = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[idx(l)] * out[idx(l)]).sum();
                        for l in 0..len {
                            dx[idx(l)] = out[idx(l)] * (g[idx(l)] - dot);
                        }
                    }
                }
                vec![Some(dx)]
            },
        ))
    }
}
