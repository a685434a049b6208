//! CSV outputs: training log, per-frame metrics, ablation and
//! counterfactual tables. Floats are written in shortest round-trip form.

use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::Evaluation;
use crate::experiments::{AblationRow, CounterfactOutcome, MetricDeltas, BASELINE_NAME};
use crate::metrics::MetricsReport;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appending row writer for `train.csv` and `eval.csv`. The header is
/// written only when the file is new, so a resumed run continues the same log.
pub struct CsvLog {
    path: std::path::PathBuf,
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let existing = append && path.metadata().map(|m| m.len() > 0).unwrap_or(false);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(!existing).from_writer(file);
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn write<T: Serialize>(&mut self, rec: &T) -> Result<()> {
        self.writer.serialize(rec).map_err(|e| csv_err(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Aggregate metrics after `steps` completed training steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRecord {
    pub steps: usize,
    pub kld: f64,
    pub cc: f64,
    pub sim: f64,
    pub nss: Option<f64>,
    pub auc_j: Option<f64>,
    pub auc_s: Option<f64>,
}

impl EvalRecord {
    pub fn new(steps: usize, r: &MetricsReport) -> Self {
        Self {
            steps,
            kld: r.kld,
            cc: r.cc,
            sim: r.sim,
            nss: r.nss,
            auc_j: r.auc_j,
            auc_s: r.auc_s,
        }
    }
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    clip_id: &'a str,
    frame_id: &'a str,
    kld: f64,
    cc: f64,
    sim: f64,
    nss: Option<f64>,
    auc_j: Option<f64>,
    auc_s: Option<f64>,
}

impl<'a> MetricsRow<'a> {
    fn new(clip_id: &'a str, frame_id: &'a str, r: &MetricsReport) -> Self {
        Self {
            clip_id,
            frame_id,
            kld: r.kld,
            cc: r.cc,
            sim: r.sim,
            nss: r.nss,
            auc_j: r.auc_j,
            auc_s: r.auc_s,
        }
    }
}

/// One row per evaluated frame, then a `mean` row with the aggregate.
pub fn write_metrics_csv(path: &Path, ev: &Evaluation) -> Result<()> {
    let ids: Vec<(String, String)> = ev
        .frames
        .iter()
        .map(|f| (f.clip_id.to_string(), f.frame_id.to_string()))
        .collect();
    let rows = ev
        .frames
        .iter()
        .zip(&ids)
        .map(|(f, (c, fr))| MetricsRow::new(c, fr, &f.report))
        .chain(std::iter::once(MetricsRow::new("mean", "", &ev.aggregate)));
    write_rows(path, rows)
}

#[derive(Serialize)]
struct AblationCsvRow {
    spag: u8,
    memog: u8,
    mu_infog: u8,
    kld: f64,
    cc: f64,
    sim: f64,
    nss: Option<f64>,
    auc_j: Option<f64>,
    auc_s: Option<f64>,
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|r| AblationCsvRow {
            spag: r.gate.spag_open.into(),
            memog: r.gate.memog_open.into(),
            mu_infog: r.gate.mu_infog_open.into(),
            kld: r.report.kld,
            cc: r.report.cc,
            sim: r.report.sim,
            nss: r.report.nss,
            auc_j: r.report.auc_j,
            auc_s: r.report.auc_s,
        }),
    )
}

#[derive(Serialize)]
struct CounterfactCsvRow<'a> {
    variant: &'a str,
    kld: f64,
    cc: f64,
    sim: f64,
    nss: Option<f64>,
    auc_j: Option<f64>,
    auc_s: Option<f64>,
    d_kld: f64,
    d_cc: f64,
    d_sim: f64,
    d_nss: Option<f64>,
    d_auc_j: Option<f64>,
    d_auc_s: Option<f64>,
    map_delta: f64,
}

impl<'a> CounterfactCsvRow<'a> {
    fn new(variant: &'a str, r: &MetricsReport, d: &MetricDeltas, map_delta: f64) -> Self {
        Self {
            variant,
            kld: r.kld,
            cc: r.cc,
            sim: r.sim,
            nss: r.nss,
            auc_j: r.auc_j,
            auc_s: r.auc_s,
            d_kld: d.kld,
            d_cc: d.cc,
            d_sim: d.sim,
            d_nss: d.nss,
            d_auc_j: d.auc_j,
            d_auc_s: d.auc_s,
            map_delta,
        }
    }
}

/// Baseline row first, then one row per variant with deltas against it.
pub fn write_counterfact_csv(path: &Path, out: &CounterfactOutcome) -> Result<()> {
    let zero = MetricDeltas::between(&out.baseline, &out.baseline);
    let rows = std::iter::once(CounterfactCsvRow::new(BASELINE_NAME, &out.baseline, &zero, 0.0)).chain(
        out.rows
            .iter()
            .map(|r| CounterfactCsvRow::new(&r.name, &r.report, &r.delta, r.map_delta)),
    );
    write_rows(path, rows)
}
