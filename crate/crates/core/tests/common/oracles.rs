//! Brute-force re-derivations of the saliency metrics on small maps.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 36;

pub struct Instance {
    pub pred: Vec<f64>,
    pub sal: Vec<f64>,
    pub fix: Vec<f64>,
    pub others: Vec<Vec<f64>>,
}

fn fixation_map(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut p = vec![0.0; N];
    for i in index::sample(rng, N, count) {
        p[i] = 1.0;
    }
    p
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Every third instance is quantized to a few levels to exercise ties.
    let levels = if seed.is_multiple_of(3) {
        Some(rng.random_range(2..5))
    } else {
        None
    };
    let pred = (0..N)
        .map(|_| {
            let v: f64 = rng.random_range(0.01..1.0);
            levels.map_or(v, |l| (v * l as f64).ceil() / l as f64)
        })
        .collect();
    let raw: Vec<f64> = (0..N).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let sal = raw.iter().map(|v| v / total).collect();
    let k = rng.random_range(1..6);
    let fix = fixation_map(&mut rng, k);
    let others = (0..3)
        .map(|_| {
            let k = rng.random_range(1..6);
            fixation_map(&mut rng, k)
        })
        .collect();
    Instance { pred, sal, fix, others }
}

pub fn oracle_kld(pred: &[f64], sal: &[f64], eps: f64) -> f64 {
    let sp: f64 = pred.iter().sum();
    let ss: f64 = sal.iter().sum();
    let mut total = 0.0;
    for i in 0..pred.len() {
        let q = pred[i] / sp;
        let g = sal[i] / ss;
        total += g * (eps + g / (eps + q)).ln();
    }
    total
}

pub fn oracle_cc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
    }
    let cov = sab / n - sa * sb / (n * n);
    let va = saa / n - sa * sa / (n * n);
    let vb = sbb / n - sb * sb / (n * n);
    cov / (va * vb).sqrt()
}

pub fn oracle_sim(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let mut total = 0.0;
    for i in 0..a.len() {
        let x = a[i] / sa;
        let y = b[i] / sb;
        total += if x < y { x } else { y };
    }
    total
}

pub fn oracle_nss(pred: &[f64], fix: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let mean = pred.iter().sum::<f64>() / n;
    let sd = (pred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..pred.len() {
        if fix[i] == 1.0 {
            total += (pred[i] - mean) / sd;
            count += 1.0;
        }
    }
    total / count
}

/// Judd: one ROC point per distinct fixated value, counted by scanning.
pub fn oracle_auc_judd(pred: &[f64], fix: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = (0..pred.len()).filter(|&i| fix[i] == 1.0).map(|i| pred[i]).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let n_pos = fix.iter().filter(|&&f| f == 1.0).count() as f64;
    let n_neg = pred.len() as f64 - n_pos;
    let mut curve = vec![(0.0, 0.0)];
    for t in thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for i in 0..pred.len() {
            if pred[i] >= t {
                if fix[i] == 1.0 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        curve.push((fp / n_neg, tp / n_pos));
    }
    curve.push((1.0, 1.0));
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// With thresholds at every observed value the trapezoid ROC area equals the
/// Mann-Whitney probability that a positive outranks a negative.
pub fn mann_whitney(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &q in neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn oracle_auc_shuffled(inst: &Instance, seed: u64, splits: usize) -> f64 {
    let pos: Vec<f64> = (0..N).filter(|&i| inst.fix[i] == 1.0).map(|i| inst.pred[i]).collect();
    let mut pool: Vec<usize> = (0..N).filter(|&i| inst.others.iter().any(|o| o[i] == 1.0)).collect();
    pool.sort();
    let n = pos.len().min(pool.len());
    // Negatives come from the metric's own seeded draw; only the area is
    // recomputed independently.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..splits {
        let neg: Vec<f64> = index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|k| inst.pred[pool[k]])
            .collect();
        total += mann_whitney(&pos, &neg);
    }
    total / splits as f64
}
