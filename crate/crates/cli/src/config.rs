//! Run configuration: one TOML file holds everything a command needs, and
//! every command writes its resolved copy to `<out>/config.echo`.

use std::fs;
use std::path::{Path, PathBuf};

use gatedap::data::SceneSpec;
use gatedap::loss::LossConfig;
use gatedap::metrics::MetricsConfig;
use gatedap::model::ModelConfig;
use gatedap::optim::AdamConfig;
use gatedap::tensor::NormMode;
use gatedap::{Error, Result};
use serde::{Deserialize, Serialize};

pub const ECHO_FILE: &str = "config.echo";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub log_every: usize,
    /// Steps between metric evaluations on the training set; 0 disables.
    pub eval_every: usize,
    /// Steps between checkpoint writes; the final one is always written.
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            steps: 2000,
            log_every: 100,
            eval_every: 250,
            checkpoint_every: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    /// Batch norm uses running statistics.
    #[default]
    Eval,
    /// Batch norm uses per-sample statistics, as during training.
    Train,
}

impl From<NormChoice> for NormMode {
    fn from(n: NormChoice) -> Self {
        match n {
            NormChoice::Eval => NormMode::Eval,
            NormChoice::Train => NormMode::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub norm: NormChoice,
    pub epsilon: f64,
    pub n_splits: usize,
    /// Streams whose fusion mask is forced to zero.
    pub suppress: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let m = MetricsConfig::default();
        Self {
            norm: NormChoice::Eval,
            epsilon: m.epsilon,
            n_splits: m.n_splits,
            suppress: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub clips: usize,
    pub scene: SceneSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            clips: 8,
            scene: SceneSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    /// `all` or a comma-separated list of case names.
    pub ops: String,
    /// Overrides every case's own tolerance.
    pub tol: Option<f64>,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            ops: "all".into(),
            tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    /// Parameter initialization, clip order and metric shuffling.
    pub seed: u64,
    pub threads: usize,
    /// `name=on|off` gate overrides, applied after the model is taken from
    /// this file or from a checkpoint.
    pub gates: Vec<String>,
    pub paths: Paths,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub data: DataSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            threads: 1,
            gates: Vec::new(),
            paths: Paths::default(),
            model: ModelConfig::desk(),
            loss: LossConfig::desk(),
            optimizer: AdamConfig::desk(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            data: DataSection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Config(format!("cannot read {}: {e}", path.display())),
        })?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn write_echo(&self, out: &Path) -> Result<()> {
        let path = out.join(ECHO_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    pub fn metrics(&self) -> MetricsConfig {
        MetricsConfig {
            epsilon: self.eval.epsilon,
            seed: self.seed,
            n_splits: self.eval.n_splits,
        }
    }

    pub fn threads(&self) -> usize {
        self.threads.max(1)
    }
}
