//! Each metric against a brute-force re-derivation on random 6×6 maps.

mod common;

use common::oracles::*;
use gatedap::metrics::{auc_judd, auc_shuffled, cc, kld, metrics_report, nss, sim, MetricsConfig};

#[test]
fn hundred_random_instances() {
    for seed in 0..100 {
        let x = instance(seed);
        let others: Vec<&[f64]> = x.others.iter().map(Vec::as_slice).collect();
        let eps = 1e-7;
        assert!(
            (kld(&x.pred, &x.sal, eps) - oracle_kld(&x.pred, &x.sal, eps)).abs() < 1e-6,
            "kld {seed}"
        );
        assert!(
            (cc(&x.pred, &x.sal) - oracle_cc(&x.pred, &x.sal)).abs() < 1e-9,
            "cc {seed}"
        );
        assert!(
            (sim(&x.pred, &x.sal) - oracle_sim(&x.pred, &x.sal)).abs() < 1e-9,
            "sim {seed}"
        );
        assert!(
            (nss(&x.pred, &x.fix).unwrap() - oracle_nss(&x.pred, &x.fix)).abs() < 1e-9,
            "nss {seed}"
        );
        let aj = auc_judd(&x.pred, &x.fix).unwrap();
        assert!((aj - oracle_auc_judd(&x.pred, &x.fix)).abs() < 1e-9, "auc_j {seed}");
        let s = auc_shuffled(&x.pred, &x.fix, &others, seed, 10).unwrap();
        assert!((s - oracle_auc_shuffled(&x, seed, 10)).abs() < 1e-9, "auc_s {seed}");

        let r = metrics_report(
            &x.pred,
            &x.sal,
            &x.fix,
            &others,
            &MetricsConfig {
                seed,
                ..Default::default()
            },
        );
        assert!((r.kld - oracle_kld(&x.pred, &x.sal, eps)).abs() < 1e-6);
        assert!((r.cc - oracle_cc(&x.pred, &x.sal)).abs() < 1e-9);
        assert!((r.sim - oracle_sim(&x.pred, &x.sal)).abs() < 1e-9);
        assert_eq!(r.auc_j, Some(aj));
        assert_eq!(r.auc_s, Some(s));
    }
}

#[test]
fn nss_hand_case_is_root_three() {
    let v = nss(&[0.0, 0.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 1.0]).unwrap();
    assert!((v - 3f64.sqrt()).abs() < 1e-9);
}

#[test]
fn auc_judd_perfect_separation_is_one() {
    let pred = [0.9, 0.8, 0.1, 0.2, 0.3, 0.05];
    let fix = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(auc_judd(&pred, &fix), Some(1.0));
}

#[test]
fn undefined_cases() {
    let pred = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(nss(&pred, &[0.0; 4]), None);
    assert_eq!(auc_judd(&pred, &[0.0; 4]), None);
    assert_eq!(auc_judd(&pred, &[1.0; 4]), None);
    assert_eq!(auc_shuffled(&pred, &[0.0, 1.0, 0.0, 0.0], &[], 0, 10), None);
    assert_eq!(cc(&[0.5; 4], &pred), 0.0);
    assert_eq!(nss(&[0.5; 4], &[1.0, 0.0, 0.0, 0.0]), Some(0.0));
}

#[test]
fn identical_maps() {
    let x = instance(7);
    // Each pixel contributes about -ε, so the sum sits near -Nε rather than 0.
    let d = kld(&x.sal, &x.sal, 1e-7);
    assert!(d < 1e-6 && d > -(N as f64) * 1e-7, "{d}");
    assert!((cc(&x.sal, &x.sal) - 1.0).abs() < 1e-12);
    assert!((sim(&x.sal, &x.sal) - 1.0).abs() < 1e-12);
}
