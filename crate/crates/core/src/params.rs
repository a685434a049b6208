//! Named parameter storage and the per-forward binding scope.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    /// Buffers (batch-norm running statistics) are stored and checkpointed
    /// but never receive gradients.
    pub trainable: bool,
}

/// Parameters keyed by dotted path; iteration is sorted by name.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.data.len()).sum()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<f64>, trainable: bool) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err!(
                "parameter {} shape {:?} vs {} values",
                name,
                shape,
                data.len()
            ));
        }
        if self.params.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter name {name}")));
        }
        self.params.insert(
            name.to_string(),
            Param {
                shape: shape.to_vec(),
                data,
                grad: None,
                trainable,
            },
        );
        Ok(())
    }

    /// Overwrite values in place, keeping the shape.
    pub fn set(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))?;
        if p.data.len() != data.len() {
            return Err(shape_err!(
                "parameter {} holds {} values, got {}",
                name,
                p.data.len(),
                data.len()
            ));
        }
        p.data = data;
        Ok(())
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, shape, vec![0.0; shape.iter().product()], true)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        self.insert(name, shape, vec![1.0; shape.iter().product()], true)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.insert(name, shape, vec![value; shape.iter().product()], false)
    }

    /// Normal(0, std) resampled outside ±2·std.
    pub fn trunc_normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<()> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Usage(e.to_string()))?;
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| loop {
                let v: f64 = normal.sample(&mut self.rng);
                if v.abs() <= 2.0 * std {
                    break v;
                }
            })
            .collect();
        self.insert(name, shape, data, true)
    }

    /// Kaiming/He uniform for a `C_out×C_in×kh×kw` kernel: U(±√(6 / fan_in)).
    pub fn kaiming_uniform(&mut self, name: &str, shape: &[usize]) -> Result<()> {
        let fan_in: usize = shape[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.insert(name, shape, data, true)
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(|p| p.grad = None);
    }

    pub fn accumulate(&mut self, update: ScopeUpdate) {
        for (name, g) in update.grads {
            if let Some(p) = self.params.get_mut(&name) {
                match p.grad.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => p.grad = Some(g),
                }
            }
        }
        for (name, data) in update.buffers {
            if let Some(p) = self.params.get_mut(&name) {
                p.data = data;
            }
        }
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, p) in &self.params {
            eat(name.as_bytes());
            p.shape.iter().for_each(|d| eat(&(*d as u64).to_le_bytes()));
            p.data.iter().for_each(|v| eat(&v.to_bits().to_le_bytes()));
        }
        h
    }

    /// L2 norm of every trainable parameter, for diagnostics.
    pub fn norms(&self) -> Vec<(String, f64)> {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(n, p)| (n.clone(), p.data.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }
}

/// Binds stored parameters to graph leaves for one forward pass.
///
/// Each parameter becomes a single leaf however often it is used, so reuse
/// accumulates gradients. Buffer writes are staged and applied together with
/// the gradients via [`ParamStore::accumulate`].
pub struct ParamScope<'a> {
    store: &'a ParamStore,
    track_grad: bool,
    leaves: RefCell<BTreeMap<String, Tensor>>,
    buffers: RefCell<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Default)]
pub struct ScopeUpdate {
    pub grads: BTreeMap<String, Vec<f64>>,
    pub buffers: BTreeMap<String, Vec<f64>>,
}

impl<'a> ParamScope<'a> {
    pub fn new(store: &'a ParamStore, track_grad: bool) -> Self {
        Self {
            store,
            track_grad,
            leaves: RefCell::new(BTreeMap::new()),
            buffers: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        if let Some(t) = self.leaves.borrow().get(name) {
            return Ok(t.clone());
        }
        let p = self
            .store
            .get(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter {name}")))?;
        let t = if self.track_grad && p.trainable {
            Tensor::parameter(p.shape.clone(), p.data.clone())?
        } else {
            Tensor::new(p.shape.clone(), p.data.clone())?
        };
        self.leaves.borrow_mut().insert(name.to_string(), t.clone());
        Ok(t)
    }

    /// Current buffer contents (staged writes win).
    pub fn buffer(&self, name: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.buffers.borrow().get(name) {
            return Ok(v.clone());
        }
        self.store
            .get(name)
            .map(|p| p.data.clone())
            .ok_or_else(|| Error::Usage(format!("unknown buffer {name}")))
    }

    pub fn stage_buffer(&self, name: &str, data: Vec<f64>) {
        self.buffers.borrow_mut().insert(name.to_string(), data);
    }

    /// Collects leaf gradients (after `backward`) and staged buffers.
    pub fn finish(self) -> ScopeUpdate {
        let grads = self
            .leaves
            .into_inner()
            .into_iter()
            .filter_map(|(n, t)| t.grad().map(|g| (n, g)))
            .collect();
        ScopeUpdate {
            grads,
            buffers: self.buffers.into_inner(),
        }
    }
}
