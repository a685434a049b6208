mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gatedap::Error;

use crate::commands::Outcome;
use crate::config::{NormChoice, RunConfig};

/// Gated driver-attention prediction on synthetic driving clips.
///
/// Exit codes: 0 success, 1 check failure, 2 usage or config error,
/// 3 numerical abort.
#[derive(Debug, Parser)]
#[command(name = "gatedap", version)]
struct Cli {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for clip-parallel evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Gate override, repeatable: spag, memog, mu_infog or tu, =on or =off.
    #[arg(long = "gate", global = true, value_name = "NAME=on|off")]
    gates: Vec<String>,
    /// Without a subcommand the config file's `command` is run.
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic clips.
    GenData {
        #[arg(long)]
        clips: Option<usize>,
        /// Frame height and width.
        #[arg(long)]
        size: Option<usize>,
        /// Input frames per clip.
        #[arg(long)]
        clip_len: Option<usize>,
        /// Use the slow-objects scene preset.
        #[arg(long)]
        slow_objects: bool,
    },
    /// Train from scratch or resume from a checkpoint.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Checkpoint directory to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Per-frame metrics and predicted maps.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        norm: Option<NormChoice>,
        /// Force a stream's fusion mask to zero, repeatable.
        #[arg(long)]
        suppress: Vec<String>,
    },
    /// Evaluate all eight gate open/closed combinations.
    Ablate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        norm: Option<NormChoice>,
    },
    /// Evaluate the ten counterfactual input variants.
    Counterfact {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum)]
        norm: Option<NormChoice>,
        /// Force a stream's fusion mask to zero, repeatable.
        #[arg(long)]
        suppress: Vec<String>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        /// `all` or comma-separated case names.
        #[arg(long)]
        ops: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
        /// Add a case with a deliberately wrong gradient.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: Option<PathBuf>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Merge flags into the config; flags win.
fn resolve(cli: Cli) -> gatedap::Result<(RunConfig, bool)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set_path(&mut cfg.paths.out, cli.out);
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.threads, cli.threads);
    cfg.gates.extend(cli.gates);
    let mut inject_fault = false;
    let name = match cli.command {
        None => {
            return match cfg.command.clone() {
                Some(_) => Ok((cfg, false)),
                None => Err(Error::Usage(
                    "no subcommand given and the config has no `command`".into(),
                )),
            }
        }
        Some(Command::GenData {
            clips,
            size,
            clip_len,
            slow_objects,
        }) => {
            if slow_objects {
                cfg.data.scene = gatedap::data::SceneSpec {
                    seed: cfg.data.scene.seed,
                    image_size: cfg.data.scene.image_size,
                    clip_len: cfg.data.scene.clip_len,
                    ..gatedap::data::SceneSpec::slow_objects()
                };
            }
            set(&mut cfg.data.clips, clips);
            set(&mut cfg.data.scene.image_size, size);
            set(&mut cfg.data.scene.clip_len, clip_len);
            set(&mut cfg.data.scene.seed, cli.seed);
            "gen-data"
        }
        Some(Command::Train {
            data,
            steps,
            resume,
            eval_every,
            lr,
        }) => {
            set_path(&mut cfg.paths.data, data);
            set_path(&mut cfg.paths.checkpoint, resume);
            set(&mut cfg.train.steps, steps);
            set(&mut cfg.train.eval_every, eval_every);
            set(&mut cfg.optimizer.learning_rate, lr);
            "train"
        }
        Some(Command::Eval {
            checkpoint,
            data,
            norm,
            suppress,
        }) => {
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            set_path(&mut cfg.paths.data, data);
            set(&mut cfg.eval.norm, norm);
            cfg.eval.suppress.extend(suppress);
            "eval"
        }
        Some(Command::Ablate { checkpoint, data, norm }) => {
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            set_path(&mut cfg.paths.data, data);
            set(&mut cfg.eval.norm, norm);
            "ablate"
        }
        Some(Command::Counterfact {
            checkpoint,
            data,
            norm,
            suppress,
        }) => {
            set_path(&mut cfg.paths.checkpoint, checkpoint);
            set_path(&mut cfg.paths.data, data);
            set(&mut cfg.eval.norm, norm);
            cfg.eval.suppress.extend(suppress);
            "counterfact"
        }
        Some(Command::Gradcheck {
            ops,
            tol,
            inject_fault: f,
        }) => {
            set(&mut cfg.gradcheck.ops, ops);
            if tol.is_some() {
                cfg.gradcheck.tol = tol;
            }
            inject_fault = f;
            "gradcheck"
        }
    };
    cfg.command = Some(name.to_string());
    Ok((cfg, inject_fault))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = resolve(cli).and_then(|(cfg, inject_fault)| commands::execute(cfg, inject_fault));
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e @ Error::NonFinite { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
