//! Per-clip prediction and metric evaluation.

use std::thread;

use crate::data::ClipSample;
use crate::error::{Error, Result};
use crate::metrics::{metrics_report, MetricsConfig, MetricsReport};
use crate::model::{forward_clip, ForwardOptions, ForwardTrace, ModelConfig};
use crate::params::{ParamScope, ParamStore};
use crate::train::PreparedClip;

/// Metrics of one evaluated frame (the target frame of a clip).
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub clip_id: u32,
    pub frame_id: usize,
    pub report: MetricsReport,
    /// Predicted `H×W` map.
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Sorted by clip id.
    pub frames: Vec<FrameResult>,
    pub aggregate: MetricsReport,
}

pub struct Prediction {
    pub map: Vec<f64>,
    pub trace: ForwardTrace,
}

/// Forward pass without gradients.
pub fn predict(
    store: &ParamStore,
    model: &ModelConfig,
    clip: &PreparedClip,
    opts: &ForwardOptions,
) -> Result<Prediction> {
    let scope = ParamScope::new(store, false);
    let out = forward_clip(&clip.inputs, model, &scope, opts)?;
    Ok(Prediction {
        map: out.prediction.into_vec(),
        trace: out.trace,
    })
}

/// Verify every parameter the model needs is present with the right shape.
pub fn check_compatible(store: &ParamStore, model: &ModelConfig) -> Result<()> {
    let fresh = crate::model::init_params(model, 0)?;
    for (name, p) in fresh.iter() {
        match store.get(name) {
            None => return Err(Error::Config(format!("checkpoint lacks parameter {name}"))),
            Some(q) if q.shape != p.shape => {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?} in checkpoint, model needs {:?}",
                    q.shape, p.shape
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

fn evaluate_one(
    sample: &ClipSample,
    others: &[&[f64]],
    store: &ParamStore,
    model: &ModelConfig,
    cfg: &MetricsConfig,
    opts: &ForwardOptions,
) -> Result<FrameResult> {
    let clip = PreparedClip::new(sample, model)?;
    let pred = predict(store, model, &clip, opts)?;
    let seed = cfg.seed ^ u64::from(sample.clip_id).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let report = metrics_report(
        &pred.map,
        &sample.saliency,
        &sample.fixations,
        others,
        &MetricsConfig { seed, ..*cfg },
    );
    Ok(FrameResult {
        clip_id: sample.clip_id,
        frame_id: sample.clip_len(),
        report,
        prediction: pred.map,
    })
}

/// Evaluate the target frame of every clip. Shuffled-AUC negatives come
/// from the fixations of the other clips. `threads > 1` splits the clips
/// across worker threads; results are identical to the sequential run.
pub fn evaluate(
    samples: &[ClipSample],
    model: &ModelConfig,
    store: &ParamStore,
    cfg: &MetricsConfig,
    opts: &ForwardOptions,
    threads: usize,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    check_compatible(store, model)?;
    let pools: Vec<Vec<&[f64]>> = (0..samples.len())
        .map(|i| {
            samples
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, s)| s.fixations.as_slice())
                .collect()
        })
        .collect();

    let threads = threads.clamp(1, samples.len());
    let mut frames: Vec<FrameResult> = if threads == 1 {
        samples
            .iter()
            .zip(&pools)
            .map(|(s, pool)| evaluate_one(s, pool, store, model, cfg, opts))
            .collect::<Result<_>>()?
    } else {
        let chunk = samples.len().div_ceil(threads);
        let indices: Vec<usize> = (0..samples.len()).collect();
        thread::scope(|sc| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|part| {
                    let pools = &pools;
                    sc.spawn(move || {
                        part.iter()
                            .map(|&i| evaluate_one(&samples[i], &pools[i], store, model, cfg, opts))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect::<Result<Vec<Vec<_>>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };
    frames.sort_by_key(|f| f.clip_id);
    let reports: Vec<MetricsReport> = frames.iter().map(|f| f.report).collect();
    let aggregate = MetricsReport::mean(&reports).expect("non-empty");
    Ok(Evaluation { frames, aggregate })
}
