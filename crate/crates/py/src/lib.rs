//! Python bindings. Maps and tensors cross the boundary as flat lists of
//! floats in row-major order.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gatedap::checkpoint::{load_checkpoint, save_checkpoint};
use gatedap::data::{generate_dataset, load_clip, save_clip, ClipSample, SceneSpec};
use gatedap::evaluate::{evaluate, predict};
use gatedap::gradcheck::{run_cases, select};
use gatedap::metrics::{metrics_report, MetricsConfig, MetricsReport};
use gatedap::model::{init_params, ForwardOptions, ModelConfig};
use gatedap::optim::{AdamConfig, AdamState};
use gatedap::train::{prepare, train, PreparedClip, TrainConfig};
use gatedap::{Error, ParamStore};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingFile(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        e @ (Error::NonFinite { .. } | Error::Io { .. }) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kld", r.kld)?;
    d.set_item("cc", r.cc)?;
    d.set_item("sim", r.sim)?;
    d.set_item("nss", r.nss)?;
    d.set_item("auc_j", r.auc_j)?;
    d.set_item("auc_s", r.auc_s)?;
    Ok(d)
}

/// Autodiff tensor of 64-bit floats.
#[pyclass(unsendable, skip_from_py_object, name = "Tensor")]
#[derive(Clone)]
struct PyTensor {
    inner: gatedap::Tensor,
}

impl From<gatedap::Tensor> for PyTensor {
    fn from(inner: gatedap::Tensor) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (data, shape, requires_grad=false))]
    fn new(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> PyResult<Self> {
        let t = if requires_grad {
            gatedap::Tensor::parameter(shape, data)
        } else {
            gatedap::Tensor::new(shape, data)
        };
        t.map(Self::from).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    fn tolist(&self) -> Vec<f64> {
        self.inner.to_vec()
    }

    fn item(&self) -> f64 {
        self.inner.item()
    }

    #[getter]
    fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad()
    }

    fn backward(&self) -> PyResult<()> {
        self.inner.backward().map_err(py_err)
    }

    fn __add__(&self, other: &PyTensor) -> PyResult<Self> {
        self.inner.add(&other.inner).map(Self::from).map_err(py_err)
    }

    fn __sub__(&self, other: &PyTensor) -> PyResult<Self> {
        self.inner.sub(&other.inner).map(Self::from).map_err(py_err)
    }

    fn __mul__(&self, other: &PyTensor) -> PyResult<Self> {
        self.inner.mul(&other.inner).map(Self::from).map_err(py_err)
    }

    fn __truediv__(&self, other: &PyTensor) -> PyResult<Self> {
        self.inner.div(&other.inner).map(Self::from).map_err(py_err)
    }

    fn __matmul__(&self, other: &PyTensor) -> PyResult<Self> {
        self.inner.matmul(&other.inner).map(Self::from).map_err(py_err)
    }

    fn sigmoid(&self) -> Self {
        self.inner.sigmoid().into()
    }

    fn tanh(&self) -> Self {
        self.inner.tanh().into()
    }

    fn relu(&self) -> Self {
        self.inner.relu().into()
    }

    fn exp(&self) -> Self {
        self.inner.exp().into()
    }

    fn log(&self) -> PyResult<Self> {
        self.inner.log().map(Self::from).map_err(py_err)
    }

    fn softmax(&self, axis: usize) -> PyResult<Self> {
        self.inner.softmax(axis).map(Self::from).map_err(py_err)
    }

    fn sum(&self) -> Self {
        self.inner.sum_all().into()
    }

    fn mean(&self) -> Self {
        self.inner.mean_all().into()
    }

    fn reshape(&self, shape: Vec<usize>) -> PyResult<Self> {
        self.inner.reshape(&shape).map(Self::from).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// One synthetic or loaded clip: input frames plus target saliency and
/// fixations.
#[pyclass(skip_from_py_object, name = "Clip")]
#[derive(Clone)]
struct PyClip {
    inner: ClipSample,
}

#[pymethods]
impl PyClip {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        load_clip(&dir).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Write under `root`; returns the clip directory.
    fn save(&self, root: PathBuf) -> PyResult<PathBuf> {
        save_clip(&root, &self.inner).map_err(py_err)
    }

    #[getter]
    fn clip_id(&self) -> u32 {
        self.inner.clip_id
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn clip_len(&self) -> usize {
        self.inner.clip_len()
    }

    #[getter]
    fn saliency(&self) -> Vec<f64> {
        self.inner.saliency.clone()
    }

    #[getter]
    fn fixations(&self) -> Vec<f64> {
        self.inner.fixations.clone()
    }

    /// RGB of frame `t` as `3×H×W`.
    fn rgb(&self, t: usize) -> PyResult<Vec<f64>> {
        self.inner
            .frames
            .get(t)
            .map(|f| f.rgb.clone())
            .ok_or_else(|| PyValueError::new_err(format!("frame {t} out of range")))
    }
}

/// Generate `count` synthetic clips.
#[pyfunction]
#[pyo3(signature = (count, seed=0, size=64, clip_len=4, slow_objects=false))]
fn generate(count: usize, seed: u64, size: usize, clip_len: usize, slow_objects: bool) -> PyResult<Vec<PyClip>> {
    let base = if slow_objects {
        SceneSpec::slow_objects()
    } else {
        SceneSpec::default()
    };
    let spec = SceneSpec {
        seed,
        image_size: size,
        clip_len,
        ..base
    };
    let clips = generate_dataset(&spec, count).map_err(py_err)?;
    Ok(clips.into_iter().map(|inner| PyClip { inner }).collect())
}

/// Model configuration plus parameters and optimizer state.
#[pyclass(name = "Model")]
struct PyModel {
    config: ModelConfig,
    store: ParamStore,
    adam: AdamState,
}

#[pymethods]
impl PyModel {
    /// `config` is JSON for a model configuration; missing keys take the
    /// desk defaults.
    #[new]
    #[pyo3(signature = (config=None, seed=0, learning_rate=1e-3))]
    fn new(config: Option<&str>, seed: u64, learning_rate: f64) -> PyResult<Self> {
        let config: ModelConfig = match config {
            Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ModelConfig::desk(),
        };
        let store = init_params(&config, seed).map_err(py_err)?;
        let adam = AdamState::new(AdamConfig {
            learning_rate,
            ..AdamConfig::desk()
        });
        Ok(Self { config, store, adam })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let ck = load_checkpoint(&dir).map_err(py_err)?;
        Ok(Self {
            config: ck.model,
            store: ck.store,
            adam: ck.adam,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_checkpoint(&dir, &self.config, &self.store, &self.adam).map_err(py_err)
    }

    #[getter]
    fn config(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    #[getter]
    fn step(&self) -> u64 {
        self.adam.step
    }

    fn checksum(&self) -> u64 {
        self.store.checksum()
    }

    /// Override gates with `name=on|off` strings.
    fn set_gates(&mut self, overrides: Vec<String>) -> PyResult<()> {
        for o in &overrides {
            self.config.gate.apply_override(o).map_err(py_err)?;
        }
        Ok(())
    }

    /// Predicted `H×W` map for the clip's target frame.
    fn predict(&self, clip: &PyClip) -> PyResult<Vec<f64>> {
        let prepared = PreparedClip::new(&clip.inner, &self.config).map_err(py_err)?;
        let p = predict(&self.store, &self.config, &prepared, &ForwardOptions::eval()).map_err(py_err)?;
        Ok(p.map)
    }

    /// Train until the optimizer has taken `steps` steps in total; returns
    /// the losses of the steps taken in this call.
    #[pyo3(signature = (clips, steps, seed=0, alpha=0.1, beta=0.0))]
    fn train(
        &mut self,
        clips: Vec<PyRef<'_, PyClip>>,
        steps: usize,
        seed: u64,
        alpha: f64,
        beta: f64,
    ) -> PyResult<Vec<f64>> {
        let samples: Vec<ClipSample> = clips.iter().map(|c| c.inner.clone()).collect();
        let prepared = prepare(&samples, &self.config).map_err(py_err)?;
        let cfg = TrainConfig {
            steps,
            seed,
            loss: gatedap::loss::LossConfig {
                alpha,
                beta,
                ..Default::default()
            },
            optimizer: self.adam.config,
            log_every: 0,
        };
        let log = train(
            &prepared,
            &self.config,
            &mut self.store,
            &mut self.adam,
            &cfg,
            |_, _, _| Ok(()),
        )
        .map_err(py_err)?;
        Ok(log.iter().map(|r| r.loss).collect())
    }

    /// Aggregate metrics over the clips.
    #[pyo3(signature = (clips, seed=0))]
    fn evaluate<'py>(&self, py: Python<'py>, clips: Vec<PyRef<'_, PyClip>>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let samples: Vec<ClipSample> = clips.iter().map(|c| c.inner.clone()).collect();
        let cfg = MetricsConfig {
            seed,
            ..MetricsConfig::default()
        };
        let ev = evaluate(&samples, &self.config, &self.store, &cfg, &ForwardOptions::eval(), 1).map_err(py_err)?;
        report_dict(py, &ev.aggregate)
    }
}

/// All six saliency metrics for one map.
#[pyfunction]
#[pyo3(signature = (prediction, saliency, fixations, other_fixations=Vec::new(), seed=0))]
fn metrics<'py>(
    py: Python<'py>,
    prediction: Vec<f64>,
    saliency: Vec<f64>,
    fixations: Vec<f64>,
    other_fixations: Vec<Vec<f64>>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let n = prediction.len();
    if saliency.len() != n || fixations.len() != n || other_fixations.iter().any(|o| o.len() != n) {
        return Err(PyValueError::new_err("all maps must have the same length"));
    }
    let pool: Vec<&[f64]> = other_fixations.iter().map(Vec::as_slice).collect();
    let cfg = MetricsConfig {
        seed,
        ..MetricsConfig::default()
    };
    report_dict(py, &metrics_report(&prediction, &saliency, &fixations, &pool, &cfg))
}

/// Run finite-difference checks; returns `(name, max_rel_error, tol, passed)`.
#[pyfunction]
#[pyo3(signature = (ops="all", tol=None))]
fn gradcheck(ops: &str, tol: Option<f64>) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let cases = select(ops).map_err(py_err)?;
    let reports = run_cases(&cases, tol).map_err(py_err)?;
    Ok(reports
        .into_iter()
        .map(|r| (r.name, r.max_rel_error, r.tol, r.passed))
        .collect())
}

#[pymodule]
fn gatedap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyClip>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
