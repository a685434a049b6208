//! Gate-closing ablation and counterfactual sweeps over a trained model.
//! Neither retrains nor modifies the parameters.

use serde::Serialize;

use crate::data::{apply_counterfact, counterfactual_variants, ClipSample, CounterfactSpec};
use crate::error::Result;
use crate::evaluate::{evaluate, Evaluation};
use crate::gating::GateConfig;
use crate::metrics::{MetricsConfig, MetricsReport};
use crate::model::{apply_gate_closing, ForwardOptions, ModelConfig};
use crate::params::ParamStore;

pub const BASELINE_NAME: &str = "Gate-DAP-Full-Model";

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub gate: GateConfig,
    pub report: MetricsReport,
}

/// Evaluate the eight open/closed combinations of SpaG, MemoG and MU-InfoG.
/// The temporal-uncertainty variant is kept as configured in `model`.
pub fn ablate(
    samples: &[ClipSample],
    model: &ModelConfig,
    store: &ParamStore,
    cfg: &MetricsConfig,
    opts: &ForwardOptions,
    threads: usize,
) -> Result<Vec<AblationRow>> {
    GateConfig::ablation_grid(model.gate.temporal_uncertainty)
        .into_iter()
        .map(|gate| {
            let ev = evaluate(samples, &apply_gate_closing(model, gate), store, cfg, opts, threads)?;
            Ok(AblationRow {
                gate,
                report: ev.aggregate,
            })
        })
        .collect()
}

/// `variant − baseline` per metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricDeltas {
    pub kld: f64,
    pub cc: f64,
    pub sim: f64,
    pub nss: Option<f64>,
    pub auc_j: Option<f64>,
    pub auc_s: Option<f64>,
}

impl MetricDeltas {
    pub fn between(variant: &MetricsReport, baseline: &MetricsReport) -> Self {
        let d = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
        Self {
            kld: variant.kld - baseline.kld,
            cc: variant.cc - baseline.cc,
            sim: variant.sim - baseline.sim,
            nss: d(variant.nss, baseline.nss),
            auc_j: d(variant.auc_j, baseline.auc_j),
            auc_s: d(variant.auc_s, baseline.auc_s),
        }
    }

    /// Largest absolute delta over the defined metrics.
    pub fn max_abs(&self) -> f64 {
        [
            Some(self.kld),
            Some(self.cc),
            Some(self.sim),
            self.nss,
            self.auc_j,
            self.auc_s,
        ]
        .iter()
        .flatten()
        .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct CounterfactRow {
    pub name: String,
    pub spec: CounterfactSpec,
    pub report: MetricsReport,
    pub delta: MetricDeltas,
    /// Mean over clips of the mean absolute per-pixel change of the
    /// predicted map.
    pub map_delta: f64,
}

#[derive(Debug, Clone)]
pub struct CounterfactOutcome {
    pub baseline: MetricsReport,
    pub rows: Vec<CounterfactRow>,
}

fn map_delta(a: &Evaluation, b: &Evaluation) -> f64 {
    let per_clip: Vec<f64> = a
        .frames
        .iter()
        .zip(&b.frames)
        .map(|(x, y)| {
            let n = x.prediction.len() as f64;
            x.prediction
                .iter()
                .zip(&y.prediction)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>()
                / n
        })
        .collect();
    per_clip.iter().sum::<f64>() / per_clip.len() as f64
}

/// Evaluate `variants` (default: the ten named ones) against the unmodified
/// inputs. Ground truth is never edited, only the model inputs.
pub fn counterfact(
    samples: &[ClipSample],
    model: &ModelConfig,
    store: &ParamStore,
    cfg: &MetricsConfig,
    opts: &ForwardOptions,
    threads: usize,
    variants: Option<&[CounterfactSpec]>,
) -> Result<CounterfactOutcome> {
    let base = evaluate(samples, model, store, cfg, opts, threads)?;
    let specs = variants.map_or_else(counterfactual_variants, <[_]>::to_vec);
    let rows = specs
        .into_iter()
        .map(|spec| {
            let edited = samples
                .iter()
                .map(|s| apply_counterfact(s, &spec))
                .collect::<Result<Vec<_>>>()?;
            let ev = evaluate(&edited, model, store, cfg, opts, threads)?;
            Ok(CounterfactRow {
                name: spec.name(),
                delta: MetricDeltas::between(&ev.aggregate, &base.aggregate),
                map_delta: map_delta(&ev, &base),
                report: ev.aggregate,
                spec,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CounterfactOutcome {
        baseline: base.aggregate,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, SceneSpec};
    use crate::model::{init_params, tests::tiny};

    fn cfg16() -> ModelConfig {
        let mut c = tiny();
        c.encoder.image_size = 16;
        c.gru_hidden = 16;
        c
    }

    fn small_data(cfg: &ModelConfig) -> Vec<ClipSample> {
        let spec = SceneSpec {
            image_size: cfg.encoder.image_size,
            clip_len: cfg.clip_len,
            sigma: 1.5,
            ..SceneSpec::default()
        };
        generate_dataset(&spec, 3).unwrap()
    }

    #[test]
    fn eight_rows_last_is_all_open() {
        let cfg = cfg16();
        let store = init_params(&cfg, 1).unwrap();
        let data = small_data(&cfg);
        let rows = ablate(
            &data,
            &cfg,
            &store,
            &MetricsConfig::default(),
            &ForwardOptions::eval(),
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 8);
        let full = evaluate(
            &data,
            &cfg,
            &store,
            &MetricsConfig::default(),
            &ForwardOptions::eval(),
            1,
        )
        .unwrap();
        assert_eq!(rows[7].report, full.aggregate);
    }

    #[test]
    fn suppressed_stream_is_inert() {
        let cfg = cfg16();
        let store = init_params(&cfg, 2).unwrap();
        let data = small_data(&cfg);
        let sem = cfg
            .info_types
            .iter()
            .position(|t| *t == crate::model::InfoType::Semantic)
            .unwrap();
        let opts = ForwardOptions {
            suppressed: vec![sem],
            ..ForwardOptions::eval()
        };
        let out = counterfact(&data, &cfg, &store, &MetricsConfig::default(), &opts, 1, None).unwrap();
        assert_eq!(out.rows.len(), 10);
        for row in out
            .rows
            .iter()
            .filter(|r| r.spec.stream == crate::model::InfoType::Semantic)
        {
            assert!(row.delta.max_abs() < 1e-9, "{}: {:?}", row.name, row.delta);
            assert!(row.map_delta < 1e-9);
        }
    }
}
