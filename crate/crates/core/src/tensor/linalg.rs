use super::Tensor;
use crate::error::{shape_err, Result};

/// C[m×n] += A[m×k] · B[k×n], row-major.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if n < 8 && k >= 8 {
        // Narrow output: short rows make the axpy form slow, use dots instead.
        let bt = transpose(b, k, n);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                c[i * n + j] += dot(arow, &bt[j * k..(j + 1) * k]);
            }
        }
        return;
    }
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Four interleaved partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// C[m×n] += A[m×k] · B[n×k]ᵀ
pub(crate) fn gemm_bt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if k < 8 {
        gemm_acc(a, &transpose(b, n, k), c, m, k, n);
        return;
    }
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] += dot(arow, brow);
        }
    }
}

/// C[k×n] += A[m×k]ᵀ · B[m×n]
pub(crate) fn gemm_at_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if n < 8 {
        gemm_acc(&transpose(a, m, k), b, c, k, m, n);
        return;
    }
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (&[m, k], &[k2, n]) = (self.shape(), other.shape()) else {
            return Err(shape_err!(
                "matmul needs two matrices, got {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        };
        if k != k2 {
            return Err(shape_err!(
                "matmul inner dimensions differ: {:?} · {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.data(), other.data(), &mut out, m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let ga = a.requires_grad().then(|| {
                    let mut da = vec![0.0; m * k];
                    gemm_bt_acc(g, b.data(), &mut da, m, n, k);
                    da
                });
                let gb = b.requires_grad().then(|| {
                    let mut db = vec![0.0; k * n];
                    gemm_at_acc(a.data(), g, &mut db, m, k, n);
                    db
                });
                vec![ga, gb]
            },
        ))
    }

    /// Swap the two axes of a matrix.
    pub fn transpose(&self) -> Result<Tensor> {
        let &[r, c] = self.shape() else {
            return Err(shape_err!("transpose needs a matrix, got {:?}", self.shape()));
        };
        let src = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(Tensor::from_op(vec![c, r], out, vec![self.clone()], move |g| {
            let mut dx = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    dx[i * c + j] = g[j * r + i];
                }
            }
            vec![Some(dx)]
        }))
    }

    /// `x · w + b` for `x[N×in]`, `w[in×out]`, `b[out]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let y = self.matmul(weight)?;
        match bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}
