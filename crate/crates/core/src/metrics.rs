//! Saliency evaluation metrics on flattened maps.
//!
//! Maps are row-major slices of one frame; fixation maps hold 0 or 1.
//! Location-based metrics return `None` where they are undefined.

use log::warn;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn sum(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = sum(x) / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Scale to unit mass; maps already at unit mass (within 1e-9) are returned
/// as is, zero-mass maps unchanged.
fn normalized(x: &[f64], what: &str) -> Vec<f64> {
    let s = sum(x);
    if (s - 1.0).abs() <= 1e-9 {
        return x.to_vec();
    }
    if s <= 0.0 {
        warn!("{what} has no mass; left unnormalized");
        return x.to_vec();
    }
    if what != "prediction" {
        warn!("{what} does not sum to 1 (sum {s}); normalizing");
    }
    x.iter().map(|v| v / s).collect()
}

fn fixated(p: &[f64]) -> impl Iterator<Item = usize> + '_ {
    p.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(i, _)| i)
}

/// `Σ Y·log(ε + Y/(ε + Ŷ))` on unit-mass maps. Lower is better.
pub fn kld(y_hat: &[f64], y: &[f64], epsilon: f64) -> f64 {
    let yh = normalized(y_hat, "prediction");
    let yt = normalized(y, "ground truth");
    kld_normalized(&yh, &yt, epsilon)
}

fn kld_normalized(yh: &[f64], y: &[f64], epsilon: f64) -> f64 {
    y.iter()
        .zip(yh)
        .map(|(&t, &p)| t * (epsilon + t / (epsilon + p)).ln())
        .sum()
}

/// Pearson correlation with population standard deviations; 0 when either
/// map is constant.
pub fn cc(y_hat: &[f64], y: &[f64]) -> f64 {
    let (ma, sa) = mean_std(y_hat);
    let (mb, sb) = mean_std(y);
    if sa == 0.0 || sb == 0.0 {
        warn!("constant map; CC defined as 0");
        return 0.0;
    }
    let cov = y_hat.iter().zip(y).map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / y.len() as f64;
    cov / (sa * sb)
}

/// Histogram intersection of the unit-mass maps.
pub fn sim(y_hat: &[f64], y: &[f64]) -> f64 {
    if sum(y_hat) <= 0.0 || sum(y) <= 0.0 {
        warn!("zero-mass map; SIM defined as 0");
        return 0.0;
    }
    sim_normalized(&normalized(y_hat, "prediction"), &normalized(y, "ground truth"))
}

fn sim_normalized(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a.min(*b)).sum()
}

/// Mean standardized prediction at fixations.
pub fn nss(y_hat: &[f64], p: &[f64]) -> Option<f64> {
    let fix: Vec<usize> = fixated(p).collect();
    if fix.is_empty() {
        return None;
    }
    let (m, s) = mean_std(y_hat);
    if s == 0.0 {
        warn!("constant prediction; NSS defined as 0");
        return Some(0.0);
    }
    Some(fix.iter().map(|&i| (y_hat[i] - m) / s).sum::<f64>() / fix.len() as f64)
}

/// Trapezoid area under the (fp, tp) points, framed by (0,0) and (1,1).
fn trapezoid(points: &[(f64, f64)]) -> f64 {
    let mut prev = (0.0, 0.0);
    let mut area = 0.0;
    for &pt in points.iter().chain(std::iter::once(&(1.0, 1.0))) {
        area += (pt.0 - prev.0) * (pt.1 + prev.1) / 2.0;
        prev = pt;
    }
    area
}

/// Number of entries of the ascending `sorted` that are `>= t`.
fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < t)
}

/// ROC area with fixated pixels as positives and every other pixel as a
/// negative; thresholds at the distinct predicted values of the fixations.
pub fn auc_judd(y_hat: &[f64], p: &[f64]) -> Option<f64> {
    let mut pos: Vec<f64> = fixated(p).map(|i| y_hat[i]).collect();
    let mut neg: Vec<f64> = (0..y_hat.len()).filter(|&i| p[i] <= 0.5).map(|i| y_hat[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut thresholds = pos.clone();
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .rev()
        .map(|&t| {
            (
                count_at_least(&neg, t) as f64 / neg.len() as f64,
                count_at_least(&pos, t) as f64 / pos.len() as f64,
            )
        })
        .collect();
    Some(trapezoid(&points))
}

/// ROC area over all distinct values of `pos ∪ neg`.
fn roc_area(pos: &[f64], neg: &[f64]) -> f64 {
    let mut pos = pos.to_vec();
    let mut neg = neg.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .rev()
        .map(|&t| {
            (
                count_at_least(&neg, t) as f64 / neg.len() as f64,
                count_at_least(&pos, t) as f64 / pos.len() as f64,
            )
        })
        .collect();
    trapezoid(&points)
}

/// Shuffled AUC. Negatives are drawn (without replacement, seeded) from the
/// union of fixation locations in `other_fixations`, as many as there are
/// fixations; the result is the mean over `n_splits` draws.
pub fn auc_shuffled(y_hat: &[f64], p: &[f64], other_fixations: &[&[f64]], seed: u64, n_splits: usize) -> Option<f64> {
    let pos: Vec<f64> = fixated(p).map(|i| y_hat[i]).collect();
    let mut pool: Vec<usize> = other_fixations
        .iter()
        .flat_map(|o| fixated(o).collect::<Vec<_>>())
        .collect();
    pool.sort_unstable();
    pool.dedup();
    pool.retain(|&i| i < y_hat.len());
    if pos.is_empty() || pool.is_empty() || n_splits == 0 {
        return None;
    }
    let n = pos.len().min(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..n_splits)
        .map(|_| {
            let neg: Vec<f64> = index::sample(&mut rng, pool.len(), n)
                .into_iter()
                .map(|k| y_hat[pool[k]])
                .collect();
            roc_area(&pos, &neg)
        })
        .sum();
    Some(total / n_splits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub n_splits: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            seed: 0,
            n_splits: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kld: f64,
    pub cc: f64,
    pub sim: f64,
    pub nss: Option<f64>,
    pub auc_j: Option<f64>,
    pub auc_s: Option<f64>,
}

impl MetricsReport {
    /// Column-wise mean; undefined entries are skipped per column.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let opt_mean = |f: fn(&MetricsReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        Some(MetricsReport {
            kld: reports.iter().map(|r| r.kld).sum::<f64>() / n,
            cc: reports.iter().map(|r| r.cc).sum::<f64>() / n,
            sim: reports.iter().map(|r| r.sim).sum::<f64>() / n,
            nss: opt_mean(|r| r.nss),
            auc_j: opt_mean(|r| r.auc_j),
            auc_s: opt_mean(|r| r.auc_s),
        })
    }
}

/// All six metrics for one frame, normalizing each map once.
pub fn metrics_report(
    y_hat: &[f64],
    y: &[f64],
    p: &[f64],
    shuffle_pool: &[&[f64]],
    cfg: &MetricsConfig,
) -> MetricsReport {
    let yh = normalized(y_hat, "prediction");
    let yt = normalized(y, "ground truth");
    let sim = if sum(&yh) <= 0.0 || sum(&yt) <= 0.0 {
        0.0
    } else {
        sim_normalized(&yh, &yt)
    };
    MetricsReport {
        kld: kld_normalized(&yh, &yt, cfg.epsilon),
        cc: cc(y_hat, y),
        sim,
        nss: nss(y_hat, p),
        auc_j: auc_judd(y_hat, p),
        auc_s: auc_shuffled(y_hat, p, shuffle_pool, cfg.seed, cfg.n_splits),
    }
}
