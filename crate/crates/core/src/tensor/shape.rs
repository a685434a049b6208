use super::{numel, Tensor};
use crate::error::{shape_err, Result};

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() || shape.contains(&0) {
            return Err(shape_err!("cannot reshape {:?} into {:?}", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Join along an existing axis; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| shape_err!("concat of zero tensors"))?;
        let rank = first.rank();
        if axis >= rank {
            return Err(shape_err!("concat axis {} out of range for {:?}", axis, first.shape()));
        }
        for p in parts {
            let ok = p.rank() == rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(shape_err!(
                    "concat shape mismatch: {:?} vs {:?} on axis {}",
                    p.shape(),
                    first.shape(),
                    axis
                ));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;

        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &l) in parts.iter().zip(&lens) {
                out.extend_from_slice(&p.data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let needs: Vec<bool> = parts.iter().map(Tensor::requires_grad).collect();
        Ok(Tensor::from_op(shape, out, parts.to_vec(), move |g| {
            let mut grads: Vec<Option<Vec<f64>>> = needs
                .iter()
                .zip(&lens)
                .map(|(&n, &l)| n.then(|| Vec::with_capacity(outer * l * inner)))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &l) in grads.iter_mut().zip(&lens) {
                    if let Some(gp) = gp {
                        gp.extend_from_slice(&g[off..off + l * inner]);
                    }
                    off += l * inner;
                }
            }
            grads
        }))
    }

    /// Stack identically shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| shape_err!("stack of zero tensors"))?;
        if parts.iter().any(|p| p.shape() != first.shape()) {
            return Err(shape_err!("stack needs identical shapes"));
        }
        let mut unit = vec![1];
        unit.extend_from_slice(first.shape());
        let lifted = parts.iter().map(|p| p.reshape(&unit)).collect::<Result<Vec<_>>>()?;
        Tensor::concat(&lifted, 0)
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return Err(shape_err!(
                "slice [{}..{}) on axis {} out of range for {:?}",
                start,
                start + len,
                axis,
                self.shape()
            ));
        }
        let full = self.shape()[axis];
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let n = self.numel();
        Ok(Tensor::from_op(shape, out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n];
            for o in 0..outer {
                let base = (o * full + start) * inner;
                dx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        }))
    }

    /// `out[i] = self[indices[i]]`; gradients scatter back additively.
    pub fn gather(&self, shape: &[usize], indices: Vec<usize>) -> Result<Tensor> {
        if numel(shape) != indices.len() || indices.iter().any(|&i| i >= self.numel()) {
            return Err(shape_err!(
                "gather indices do not fit {:?} -> {:?}",
                self.shape(),
                shape
            ));
        }
        let src = self.data();
        let out = indices.iter().map(|&i| src[i]).collect();
        let n = self.numel();
        Ok(Tensor::from_op(shape.to_vec(), out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; n];
            for (&i, &gv) in indices.iter().zip(g) {
                dx[i] += gv;
            }
            vec![Some(dx)]
        }))
    }

    /// Each pixel of `C×H×W` becomes a 2×2 block.
    pub fn upsample_nearest_2x(&self) -> Result<Tensor> {
        let &[c, h, w] = self.shape() else {
            return Err(shape_err!("upsample needs C×H×W, got {:?}", self.shape()));
        };
        let (h2, w2) = (2 * h, 2 * w);
        let x = self.data();
        let mut out = vec![0.0; c * h2 * w2];
        for ch in 0..c {
            for y in 0..h2 {
                let src = &x[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                let dst = &mut out[(ch * h2 + y) * w2..(ch * h2 + y + 1) * w2];
                for (xo, d) in dst.iter_mut().enumerate() {
                    *d = src[xo / 2];
                }
            }
        }
        Ok(Tensor::from_op(vec![c, h2, w2], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; c * h * w];
            for ch in 0..c {
                for y in 0..h2 {
                    for xo in 0..w2 {
                        dx[(ch * h + y / 2) * w + xo / 2] += g[(ch * h2 + y) * w2 + xo];
                    }
                }
            }
            vec![Some(dx)]
        }))
    }
}
