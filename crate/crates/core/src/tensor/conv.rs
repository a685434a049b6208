use super::linalg::{gemm_acc, gemm_at_acc, gemm_bt_acc};
use super::Tensor;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    /// Valid output-x range for kernel column `kx`: input column is `ox + kx - pad`.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx).min(self.ow);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }

    fn oy_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky).min(self.oh);
        let hi = (self.h + self.pad).saturating_sub(ky).min(self.oh);
        (lo, hi.max(lo))
    }
}

impl Tensor {
    /// Stride-1 cross-correlation of `x[C_in×H×W]` with `kernel[C_out×C_in×kh×kw]`.
    pub fn conv2d(&self, kernel: &Tensor, bias: Option<&Tensor>, padding: usize) -> Result<Tensor> {
        let &[cin, h, w] = self.shape() else {
            return Err(shape_err!("conv2d input must be C×H×W, got {:?}", self.shape()));
        };
        let &[cout, kcin, kh, kw] = kernel.shape() else {
            return Err(shape_err!("conv2d kernel must be 4-D, got {:?}", kernel.shape()));
        };
        if kcin != cin {
            return Err(shape_err!("kernel expects {} input channels, input has {}", kcin, cin));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err!("kernel size {}×{} must be odd", kh, kw));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(shape_err!(
                    "bias shape {:?} does not match {} output channels",
                    b.shape(),
                    cout
                ));
            }
        }
        let oh = (h + 2 * padding) as isize - kh as isize + 1;
        let ow = (w + 2 * padding) as isize - kw as isize + 1;
        if oh <= 0 || ow <= 0 {
            return Err(shape_err!("conv2d output would be {}×{}", oh, ow));
        }
        let g = Geometry {
            cin,
            h,
            w,
            kh,
            kw,
            pad: padding,
            oh: oh as usize,
            ow: ow as usize,
        };

        let cols = im2col(self.data(), &g);
        let kdim = cin * kh * kw;
        let area = g.oh * g.ow;
        let mut out = vec![0.0; cout * area];
        if let Some(b) = bias {
            for (co, plane) in out.chunks_exact_mut(area).enumerate() {
                plane.iter_mut().for_each(|v| *v = b.data()[co]);
            }
        }
        gemm_acc(kernel.data(), &cols, &mut out, cout, kdim, area);

        let (input, weight) = (self.clone(), kernel.clone());
        let has_bias = bias.is_some();
        let mut parents = vec![self.clone(), kernel.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(vec![cout, g.oh, g.ow], out, parents, move |dout| {
            let dk = weight.requires_grad().then(|| {
                let mut dk = vec![0.0; cout * kdim];
                gemm_bt_acc(dout, &cols, &mut dk, cout, area, kdim);
                dk
            });
            let dx = input.requires_grad().then(|| {
                let mut dcols = vec![0.0; kdim * area];
                gemm_at_acc(weight.data(), dout, &mut dcols, cout, kdim, area);
                col2im(&dcols, &g)
            });
            let mut grads = vec![dx, dk];
            if has_bias {
                grads.push(Some(dout.chunks_exact(area).map(|p| p.iter().sum()).collect()));
            }
            grads
        }))
    }
}

/// Rows indexed by (ci, ky, kx), columns by output pixel; zero where the
/// kernel overhangs the padded border.
fn im2col(x: &[f64], g: &Geometry) -> Vec<f64> {
    let area = g.oh * g.ow;
    let mut cols = vec![0.0; g.cin * g.kh * g.kw * area];
    for ci in 0..g.cin {
        let xin = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (y0, y1) = g.oy_range(ky);
            for kx in 0..g.kw {
                let row = &mut cols[((ci * g.kh + ky) * g.kw + kx) * area..][..area];
                let (x0, x1) = g.ox_range(kx);
                if x0 == x1 {
                    continue;
                }
                for oy in y0..y1 {
                    let lo = (oy + ky - g.pad) * g.w + x0 + kx - g.pad;
                    row[oy * g.ow + x0..oy * g.ow + x1].copy_from_slice(&xin[lo..lo + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the input.
fn col2im(cols: &[f64], g: &Geometry) -> Vec<f64> {
    let area = g.oh * g.ow;
    let mut dx = vec![0.0; g.cin * g.h * g.w];
    for ci in 0..g.cin {
        let din = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (y0, y1) = g.oy_range(ky);
            for kx in 0..g.kw {
                let row = &cols[((ci * g.kh + ky) * g.kw + kx) * area..][..area];
                let (x0, x1) = g.ox_range(kx);
                if x0 == x1 {
                    continue;
                }
                for oy in y0..y1 {
                    let lo = (oy + ky - g.pad) * g.w + x0 + kx - g.pad;
                    for (d, c) in din[lo..lo + (x1 - x0)]
                        .iter_mut()
                        .zip(&row[oy * g.ow + x0..oy * g.ow + x1])
                    {
                        *d += c;
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_identity() {
        let x = Tensor::new(vec![1, 2, 3], vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = x.conv2d(&k, Some(&b), 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = x.conv2d(&k, None, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[1], 6.0);
    }

    #[test]
    fn kernel_wider_than_input() {
        let x = Tensor::new(vec![1, 1, 2], vec![1.0, 2.0]).unwrap();
        let k = Tensor::full(&[1, 1, 7, 7], 1.0);
        let y = x.conv2d(&k, None, 3).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[3.0, 3.0]);
    }

    #[test]
    fn shape_errors() {
        let x = Tensor::zeros(&[1, 2, 2]);
        assert!(x.conv2d(&Tensor::zeros(&[1, 1, 2, 2]), None, 0).is_err());
        assert!(x.conv2d(&Tensor::zeros(&[1, 1, 5, 5]), None, 0).is_err());
        assert!(x.conv2d(&Tensor::zeros(&[1, 2, 1, 1]), None, 0).is_err());
    }
}
