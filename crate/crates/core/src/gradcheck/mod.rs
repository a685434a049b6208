//! Central finite-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{ParamScope, ParamStore};
use crate::tensor::Tensor;

mod registry;

pub use registry::{fault_injection_case, registry, run_cases, select, GradCase};

/// Input to a gradient check: shape plus values.
#[derive(Debug, Clone)]
pub struct CheckInput {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl CheckInput {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Self {
        Self {
            shape: shape.to_vec(),
            data,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tol: f64,
    /// Number of scalar coordinates perturbed.
    pub coordinates: usize,
    pub passed: bool,
}

/// Error between an analytic and a numeric derivative, relative to the larger
/// magnitude with a floor of 1 so near-zero gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares the gradient of scalar `f` w.r.t. every input against
/// `(f(x+h) - f(x-h)) / 2h`, coordinate by coordinate.
pub fn grad_check_multi<F>(name: &str, f: F, inputs: &[CheckInput], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let params = inputs
        .iter()
        .map(|i| Tensor::parameter(i.shape.clone(), i.data.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&params)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |which: usize, coord: usize, delta: f64| -> Result<f64> {
        let consts = inputs
            .iter()
            .enumerate()
            .map(|(j, inp)| {
                let mut d = inp.data.clone();
                if j == which {
                    d[coord] += delta;
                }
                Tensor::new(inp.shape.clone(), d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(f(&consts)?.item())
    };

    let mut max_err: f64 = 0.0;
    let mut coordinates = 0;
    for (which, inp) in inputs.iter().enumerate() {
        for coord in 0..inp.data.len() {
            let numeric = (eval(which, coord, h)? - eval(which, coord, -h)?) / (2.0 * h);
            max_err = max_err.max(relative_error(analytic[which][coord], numeric));
            coordinates += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error: max_err,
        tol,
        coordinates,
        passed: max_err < tol,
    })
}

pub fn grad_check<F>(name: &str, f: F, x: &CheckInput, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    grad_check_multi(name, |ts| f(&ts[0]), std::slice::from_ref(x), h, tol)
}

/// Gradient check over the parameters of a store, for modules that bind
/// their weights through a [`ParamScope`]. When the store holds more than
/// `max_coords` trainable scalars a seeded sample of them is perturbed.
pub fn grad_check_store<F>(
    name: &str,
    store: &ParamStore,
    f: F,
    h: f64,
    tol: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamScope) -> Result<Tensor>,
{
    let grads = {
        let scope = ParamScope::new(store, true);
        f(&scope)?.backward()?;
        scope.finish().grads
    };
    let coords: Vec<(String, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(n, p)| (0..p.data.len()).map(move |i| (n.clone(), i)))
        .collect();
    let picked: Vec<usize> = if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, coords.len(), max_coords).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..coords.len()).collect()
    };

    let mut work = store.clone();
    let mut eval = |pname: &str, i: usize, delta: f64| -> Result<f64> {
        let orig = work.get(pname).expect("listed").data[i];
        work.get_mut(pname).expect("listed").data[i] = orig + delta;
        let v = f(&ParamScope::new(&work, false)).map(|t| t.item());
        work.get_mut(pname).expect("listed").data[i] = orig;
        v
    };
    let mut max_err: f64 = 0.0;
    for &c in &picked {
        let (pname, i) = &coords[c];
        let numeric = (eval(pname, *i, h)? - eval(pname, *i, -h)?) / (2.0 * h);
        let analytic = grads.get(pname).map_or(0.0, |g| g[*i]);
        max_err = max_err.max(relative_error(analytic, numeric));
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_error: max_err,
        tol,
        coordinates: picked.len(),
        passed: max_err < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = CheckInput::new(&[3], vec![0.3, -1.2, 2.0]);
        let w = Tensor::from_vec(vec![1.5, -2.0, 0.25]);
        let r = grad_check("linear", |t| Ok(t.mul(&w)?.sum_all()), &x, 1e-5, 1e-9).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_error < 1e-10);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // Forward is x², backward claims 3x.
        let bad = |t: &Tensor| -> Result<Tensor> {
            let x = t.clone();
            let y = Tensor::from_op(
                t.shape().to_vec(),
                t.data().iter().map(|v| v * v).collect(),
                vec![t.clone()],
                move |g| vec![Some(g.iter().zip(x.data()).map(|(g, v)| 3.0 * g * v).collect())],
            );
            Ok(y.sum_all())
        };
        let x = CheckInput::new(&[2], vec![1.0, 2.0]);
        let r = grad_check("bad", bad, &x, 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
    }
}
