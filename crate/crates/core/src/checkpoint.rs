//! Checkpoint directories:
//!
//! ```text
//! manifest.json          model config, optimizer state summary, tensor table
//! params/<name>.gdap     one file per parameter or buffer
//! adam/m.<name>.gdap     first moments
//! adam/v.<name>.gdap     second moments
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{read_gdap, write_gdap, Dtype, GdapTensor};
use crate::model::ModelConfig;
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamStore;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub step: u64,
    pub seed: u64,
    /// Hex FNV-1a of the parameter store, checked on load.
    pub checksum: String,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub moments: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub store: ParamStore,
    pub adam: AdamState,
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save_checkpoint(dir: &Path, model: &ModelConfig, store: &ParamStore, adam: &AdamState) -> Result<()> {
    mkdir(&dir.join("params"))?;
    mkdir(&dir.join("adam"))?;
    let mut tensors = Vec::new();
    for (name, p) in store.iter() {
        let file = format!("params/{name}.gdap");
        write_gdap(&dir.join(&file), &GdapTensor::f64(p.shape.clone(), p.data.clone()))?;
        tensors.push(TensorEntry {
            name: name.clone(),
            file,
            shape: p.shape.clone(),
            dtype: Dtype::F64,
            trainable: p.trainable,
        });
    }
    let mut moments = Vec::new();
    for (tag, map) in [("m", &adam.first_moment), ("v", &adam.second_moment)] {
        for (name, data) in map {
            let file = format!("adam/{tag}.{name}.gdap");
            let shape = store.get(name).map_or_else(|| vec![data.len()], |p| p.shape.clone());
            write_gdap(&dir.join(&file), &GdapTensor::f64(shape.clone(), data.clone()))?;
            moments.push(TensorEntry {
                name: format!("{tag}.{name}"),
                file,
                shape,
                dtype: Dtype::F64,
                trainable: false,
            });
        }
    }
    let manifest = CheckpointManifest {
        step: adam.step,
        seed: store.rng_seed(),
        checksum: format!("{:016x}", store.checksum()),
        model: model.clone(),
        optimizer: adam.config,
        tensors,
        moments,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path)),
        Err(e) => return Err(Error::io(&path, e)),
    };
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}

fn read_entry(dir: &Path, entry: &TensorEntry) -> Result<Vec<f64>> {
    let path: PathBuf = dir.join(&entry.file);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let t = read_gdap(&path)?;
    if t.shape != entry.shape {
        return Err(format_err(
            &path,
            format!("shape {:?}, manifest says {:?}", t.shape, entry.shape),
        ));
    }
    Ok(t.data)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let m = read_manifest(dir)?;
    let mut store = ParamStore::new(m.seed);
    for e in &m.tensors {
        let data = read_entry(dir, e)?;
        store.insert(&e.name, &e.shape, data, e.trainable)?;
    }
    let got = format!("{:016x}", store.checksum());
    if got != m.checksum {
        return Err(format_err(
            &dir.join(MANIFEST),
            format!("parameter checksum {got} does not match recorded {}", m.checksum),
        ));
    }
    let mut adam = AdamState::new(m.optimizer);
    adam.step = m.step;
    for e in &m.moments {
        let data = read_entry(dir, e)?;
        let (tag, name) = e
            .name
            .split_once('.')
            .ok_or_else(|| format_err(&dir.join(MANIFEST), format!("bad moment name {}", e.name)))?;
        let map = match tag {
            "m" => &mut adam.first_moment,
            "v" => &mut adam.second_moment,
            _ => return Err(format_err(&dir.join(MANIFEST), format!("bad moment name {}", e.name))),
        };
        map.insert(name.to_string(), data);
    }
    Ok(Checkpoint {
        model: m.model,
        store,
        adam,
    })
}

/// Overwrite parameters of `store` with same-named tensors from a directory
/// of GDAP files listed in a checkpoint manifest; returns how many were
/// replaced. Names absent from `store` are ignored, shape mismatches are
/// config errors. This is the path for externally trained weights.
pub fn load_weights_into(store: &mut ParamStore, dir: &Path) -> Result<usize> {
    let m = read_manifest(dir)?;
    let mut n = 0;
    for e in &m.tensors {
        let Some(p) = store.get(&e.name) else { continue };
        if p.shape != e.shape {
            return Err(Error::Config(format!(
                "external tensor {} has shape {:?}, model needs {:?}",
                e.name, e.shape, p.shape
            )));
        }
        let data = read_entry(dir, e)?;
        store.set(&e.name, data)?;
        n += 1;
    }
    Ok(n)
}
