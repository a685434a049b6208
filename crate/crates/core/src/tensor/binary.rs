use super::{numel, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Hadamard,
    Div,
}

/// Right-aligned broadcast; size-1 axes stretch.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(shape_err!("cannot broadcast {:?} with {:?}", a, b)),
        };
    }
    Ok(out)
}

/// For every flat output index, the flat index into an input of `in_shape`
/// broadcast to `out_shape`.
fn broadcast_offsets(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - in_shape.len();
    let mut strides = vec![0usize; rank];
    let mut s = 1;
    for i in (0..in_shape.len()).rev() {
        if in_shape[i] != 1 {
            strides[i + pad] = s;
        }
        s *= in_shape[i];
    }
    let n = numel(out_shape);
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for d in (0..rank).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    offsets
}

fn reduce_to(grad: &[f64], offsets: &[usize], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&o, &g) in offsets.iter().zip(grad) {
        out[o] += g;
    }
    out
}

impl Tensor {
    pub fn binary(&self, op: BinaryOp, other: &Tensor) -> Result<Tensor> {
        if op == BinaryOp::Div && other.data().contains(&0.0) {
            return Err(Error::Domain("division by zero".into()));
        }
        let out_shape = broadcast_shape(self.shape(), other.shape())?;
        let n = numel(&out_shape);
        let same = self.shape() == other.shape();
        let (oa, ob) = if same {
            (None, None)
        } else {
            let oa = (self.shape() != out_shape.as_slice()).then(|| broadcast_offsets(self.shape(), &out_shape));
            let ob = (other.shape() != out_shape.as_slice()).then(|| broadcast_offsets(other.shape(), &out_shape));
            (oa, ob)
        };
        let av = |i: usize| match &oa {
            Some(o) => o[i],
            None => i,
        };
        let bv = |i: usize| match &ob {
            Some(o) => o[i],
            None => i,
        };
        let (a, b) = (self.data(), other.data());
        let data: Vec<f64> = match op {
            BinaryOp::Add => (0..n).map(|i| a[av(i)] + b[bv(i)]).collect(),
            BinaryOp::Sub => (0..n).map(|i| a[av(i)] - b[bv(i)]).collect(),
            BinaryOp::Hadamard => (0..n).map(|i| a[av(i)] * b[bv(i)]).collect(),
            BinaryOp::Div => (0..n).map(|i| a[av(i)] / b[bv(i)]).collect(),
        };

        let (lhs, rhs) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            out_shape,
            data,
            vec![self.clone(), other.clone()],
            move |g| {
                let av = |i: usize| oa.as_ref().map_or(i, |o| o[i]);
                let bv = |i: usize| ob.as_ref().map_or(i, |o| o[i]);
                let (a, b) = (lhs.data(), rhs.data());
                let (ga, gb): (Vec<f64>, Vec<f64>) = match op {
                    BinaryOp::Add => (g.to_vec(), g.to_vec()),
                    BinaryOp::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                    BinaryOp::Hadamard => (
                        g.iter().enumerate().map(|(i, &g)| g * b[bv(i)]).collect(),
                        g.iter().enumerate().map(|(i, &g)| g * a[av(i)]).collect(),
                    ),
                    BinaryOp::Div => (
                        g.iter().enumerate().map(|(i, &g)| g / b[bv(i)]).collect(),
                        g.iter()
                            .enumerate()
                            .map(|(i, &g)| {
                                let bb = b[bv(i)];
                                -g * a[av(i)] / (bb * bb)
                            })
                            .collect(),
                    ),
                };
                let ga = lhs.requires_grad().then(|| match &oa {
                    Some(o) => reduce_to(&ga, o, lhs.numel()),
                    None => ga,
                });
                let gb = rhs.requires_grad().then(|| match &ob {
                    Some(o) => reduce_to(&gb, o, rhs.numel()),
                    None => gb,
                });
                vec![ga, gb]
            },
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, other)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Hadamard, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Div, other)
    }
}
