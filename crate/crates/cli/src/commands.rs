use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gatedap::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use gatedap::data::{generate_dataset, load_dataset, save_clip, ClipSample};
use gatedap::evaluate::{evaluate, Evaluation};
use gatedap::experiments::{ablate, counterfact, BASELINE_NAME};
use gatedap::format::{write_pgm, GrayImage};
use gatedap::gradcheck::{fault_injection_case, run_cases, select};
use gatedap::metrics::MetricsReport;
use gatedap::model::{init_params, ForwardOptions, InfoType, ModelConfig};
use gatedap::optim::AdamState;
use gatedap::report::{write_ablation_csv, write_counterfact_csv, write_metrics_csv, CsvLog, EvalRecord};
use gatedap::train::{prepare, train, TrainConfig};
use gatedap::{Error, Result};
use log::info;

use crate::config::RunConfig;

pub const TRAIN_CSV: &str = "train.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const COUNTERFACT_CSV: &str = "counterfact.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const MAPS_DIR: &str = "maps";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

pub fn execute(cfg: RunConfig, inject_fault: bool) -> Result<Outcome> {
    match cfg.command.as_deref() {
        Some("gen-data") => gen_data(cfg),
        Some("train") => train_cmd(cfg),
        Some("eval") => eval_cmd(cfg),
        Some("ablate") => ablate_cmd(cfg),
        Some("counterfact") => counterfact_cmd(cfg),
        Some("gradcheck") => gradcheck_cmd(cfg, inject_fault),
        Some(other) => Err(Error::Config(format!("unknown command `{other}`"))),
        None => Err(Error::Usage("no command".into())),
    }
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Usage(format!("cannot create {}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg
        .paths
        .out
        .clone()
        .ok_or_else(|| Error::Usage("missing --out".into()))?;
    mkdir(&out)?;
    Ok(out)
}

fn checkpoint_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Usage("missing --checkpoint".into()))
}

fn apply_gates(cfg: &RunConfig, model: &mut ModelConfig) -> Result<()> {
    for g in &cfg.gates {
        model.gate.apply_override(g)?;
    }
    Ok(())
}

/// Clips from `paths.data`, or generated in memory from the data section.
fn samples(cfg: &RunConfig) -> Result<Vec<ClipSample>> {
    match &cfg.paths.data {
        Some(dir) => load_dataset(dir),
        None => {
            info!("no data directory; generating {} clips in memory", cfg.data.clips);
            generate_dataset(&cfg.data.scene, cfg.data.clips)
        }
    }
}

fn forward_options(cfg: &RunConfig, model: &ModelConfig) -> Result<ForwardOptions> {
    let suppressed = cfg
        .eval
        .suppress
        .iter()
        .map(|name| {
            let t: InfoType = name.parse()?;
            model
                .info_types
                .iter()
                .position(|&u| u == t)
                .ok_or_else(|| Error::Usage(format!("the model has no {t} stream")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardOptions {
        norm: cfg.eval.norm.into(),
        suppressed,
    })
}

fn load_model(cfg: &mut RunConfig) -> Result<Checkpoint> {
    let mut ck = load_checkpoint(&checkpoint_path(cfg)?)?;
    apply_gates(cfg, &mut ck.model)?;
    cfg.model = ck.model.clone();
    cfg.optimizer = ck.adam.config;
    Ok(ck)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn summary(r: &MetricsReport) -> String {
    format!(
        "kld {:.4} cc {:.4} sim {:.4} nss {} auc_j {} auc_s {}",
        r.kld,
        r.cc,
        r.sim,
        fmt_opt(r.nss),
        fmt_opt(r.auc_j),
        fmt_opt(r.auc_s)
    )
}

fn gen_data(cfg: RunConfig) -> Result<Outcome> {
    if cfg.data.clips == 0 {
        return Err(Error::Usage("clips must be ≥ 1".into()));
    }
    cfg.data.scene.validate()?;
    let out = out_dir(&cfg)?;
    cfg.write_echo(&out)?;
    for clip in generate_dataset(&cfg.data.scene, cfg.data.clips)? {
        let dir = save_clip(&out, &clip)?;
        let target = clip.frames.last().expect("clip has a target frame");
        let road = target.drivable.iter().filter(|&&d| d > 0).count() as f64 / clip.pixels() as f64;
        let fixations = clip.fixations.iter().filter(|&&f| f > 0.0).count();
        println!(
            "{}: {} frames {}x{}, road {:.1}%, {} fixations, max speed {:.2}",
            dir.display(),
            clip.frames.len(),
            clip.height,
            clip.width,
            100.0 * road,
            fixations,
            clip.max_speed
        );
    }
    Ok(Outcome::Success)
}

fn train_cmd(mut cfg: RunConfig) -> Result<Outcome> {
    let out = out_dir(&cfg)?;
    let resumed = cfg.paths.checkpoint.is_some();
    let (mut model, mut store, mut adam) = if resumed {
        let ck = load_checkpoint(&checkpoint_path(&cfg)?)?;
        info!("resuming from step {}", ck.adam.step);
        cfg.optimizer = ck.adam.config;
        (ck.model, ck.store, ck.adam)
    } else {
        let store = init_params(&cfg.model, cfg.seed)?;
        (cfg.model.clone(), store, AdamState::new(cfg.optimizer))
    };
    apply_gates(&cfg, &mut model)?;
    cfg.model = model.clone();
    cfg.write_echo(&out)?;

    let data = samples(&cfg)?;
    let prepared = prepare(&data, &model)?;
    let tc = TrainConfig {
        steps: cfg.train.steps,
        seed: cfg.seed,
        loss: cfg.loss,
        optimizer: cfg.optimizer,
        log_every: cfg.train.log_every,
    };
    info!(
        "{} parameters, {} clips, steps {}..{}",
        store.num_scalars(),
        data.len(),
        adam.step,
        tc.steps
    );
    let ck_dir = out.join(CHECKPOINT_DIR);
    let mut train_log = CsvLog::open(&out.join(TRAIN_CSV), resumed)?;
    let mut eval_log = CsvLog::open(&out.join(EVAL_CSV), resumed)?;
    let metrics = cfg.metrics();
    let opts = forward_options(&cfg, &model)?;
    let threads = cfg.threads();
    let (eval_every, ck_every) = (cfg.train.eval_every, cfg.train.checkpoint_every);
    let start = Instant::now();
    let mut last_eval = None;
    let log = train(&prepared, &model, &mut store, &mut adam, &tc, |rec, store, adam| {
        train_log.write(rec)?;
        let done = rec.step + 1;
        if eval_every > 0 && (done % eval_every == 0 || done == tc.steps) {
            let ev = evaluate(&data, &model, store, &metrics, &opts, threads)?;
            info!("eval after {done} steps: {}", summary(&ev.aggregate));
            eval_log.write(&EvalRecord::new(done, &ev.aggregate))?;
            last_eval = Some(ev.aggregate);
        }
        if ck_every > 0 && done % ck_every == 0 && done != tc.steps {
            save_checkpoint(&ck_dir, &model, store, adam)?;
        }
        Ok(())
    })?;
    save_checkpoint(&ck_dir, &model, &store, &adam)?;
    let secs = start.elapsed().as_secs_f64();
    match log.last() {
        Some(r) => println!("trained to step {} in {secs:.1}s, final loss {:.5}", r.step + 1, r.loss),
        None => println!("nothing to train: checkpoint is already at step {}", adam.step),
    }
    if let Some(r) = last_eval {
        println!("train-set metrics: {}", summary(&r));
    }
    println!("checkpoint: {}", ck_dir.display());
    Ok(Outcome::Success)
}

/// `maps/clip_XXXX_frame_K.pgm`, each map scaled by its maximum.
fn write_maps(dir: &Path, ev: &Evaluation, size: (usize, usize)) -> Result<()> {
    mkdir(dir)?;
    for f in &ev.frames {
        let max = f.prediction.iter().cloned().fold(0.0, f64::max);
        let unit: Vec<f64> = if max > 0.0 {
            f.prediction.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; f.prediction.len()]
        };
        let path = dir.join(format!("clip_{:04}_frame_{}.pgm", f.clip_id, f.frame_id));
        write_pgm(&path, &GrayImage::from_unit(size.1, size.0, &unit))?;
    }
    Ok(())
}

fn eval_cmd(mut cfg: RunConfig) -> Result<Outcome> {
    let out = out_dir(&cfg)?;
    let ck = load_model(&mut cfg)?;
    cfg.write_echo(&out)?;
    let data = samples(&cfg)?;
    let opts = forward_options(&cfg, &ck.model)?;
    let ev = evaluate(&data, &ck.model, &ck.store, &cfg.metrics(), &opts, cfg.threads())?;
    write_metrics_csv(&out.join(METRICS_CSV), &ev)?;
    write_maps(&out.join(MAPS_DIR), &ev, (data[0].height, data[0].width))?;
    println!("{} frames: {}", ev.frames.len(), summary(&ev.aggregate));
    Ok(Outcome::Success)
}

fn onoff(open: bool) -> &'static str {
    if open {
        "open"
    } else {
        "closed"
    }
}

fn ablate_cmd(mut cfg: RunConfig) -> Result<Outcome> {
    let out = out_dir(&cfg)?;
    let ck = load_model(&mut cfg)?;
    cfg.write_echo(&out)?;
    let data = samples(&cfg)?;
    let opts = forward_options(&cfg, &ck.model)?;
    let rows = ablate(&data, &ck.model, &ck.store, &cfg.metrics(), &opts, cfg.threads())?;
    write_ablation_csv(&out.join(ABLATION_CSV), &rows)?;
    for r in &rows {
        println!(
            "spag {:<6} memog {:<6} mu_infog {:<6} {}",
            onoff(r.gate.spag_open),
            onoff(r.gate.memog_open),
            onoff(r.gate.mu_infog_open),
            summary(&r.report)
        );
    }
    Ok(Outcome::Success)
}

fn counterfact_cmd(mut cfg: RunConfig) -> Result<Outcome> {
    let out = out_dir(&cfg)?;
    let ck = load_model(&mut cfg)?;
    cfg.write_echo(&out)?;
    let data = samples(&cfg)?;
    let opts = forward_options(&cfg, &ck.model)?;
    let res = counterfact(&data, &ck.model, &ck.store, &cfg.metrics(), &opts, cfg.threads(), None)?;
    write_counterfact_csv(&out.join(COUNTERFACT_CSV), &res)?;
    println!("{BASELINE_NAME:<22} {}", summary(&res.baseline));
    for r in &res.rows {
        println!(
            "{:<22} d_cc {:+.5} d_kld {:+.5} map_delta {:.3e}",
            r.name, r.delta.cc, r.delta.kld, r.map_delta
        );
    }
    Ok(Outcome::Success)
}

fn gradcheck_cmd(cfg: RunConfig, inject_fault: bool) -> Result<Outcome> {
    if cfg.paths.out.is_some() {
        cfg.write_echo(&out_dir(&cfg)?)?;
    }
    let mut cases = select(&cfg.gradcheck.ops)?;
    if inject_fault {
        cases.push(fault_injection_case());
    }
    let start = Instant::now();
    let reports = run_cases(&cases, cfg.gradcheck.tol)?;
    let mut failed = 0;
    for r in &reports {
        failed += usize::from(!r.passed);
        println!(
            "{:<16} max rel err {:.2e}  tol {:.0e}  coords {:>5}  {}",
            r.name,
            r.max_rel_error,
            r.tol,
            r.coordinates,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    println!(
        "{} of {} passed in {:.1}s",
        reports.len() - failed,
        reports.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(if failed == 0 {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}
