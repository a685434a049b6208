mod common;

use std::fs;

use common::*;

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    assert_eq!(code(&gatedap(&["gradcheck", "--ops", "spag,gru", "--out", s(&out)])), 0);
    assert_eq!(
        code(&gatedap(&[
            "gradcheck",
            "--ops",
            "spag",
            "--inject-fault",
            "--out",
            s(&out)
        ])),
        1
    );
    assert_eq!(
        code(&gatedap(&["gradcheck", "--ops", "no_such_op", "--out", s(&out)])),
        2
    );
    assert_eq!(code(&gatedap(&["train", "--bogus"])), 2);
    assert_eq!(code(&gatedap(&["--help"])), 0);
    assert_eq!(code(&gatedap(&[])), 2);

    let missing = gatedap(&["train", "--config", s(&tmp.path().join("nope.toml"))]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("nope.toml"));
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[optimizer]\nlearning_rat = 0.1\n");
    let o = gatedap(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rat"), "{}", stderr(&o));
}

#[test]
fn zero_clips_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gatedap(&["gen-data", "--clips", "0", "--out", s(&tmp.path().join("d"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("clips must be"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_three_and_names_the_step() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let o = gatedap(&[
        "train",
        "--config",
        s(&cfg),
        "--lr",
        "1e300",
        "--out",
        s(&tmp.path().join("r")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged at step"), "{}", stderr(&o));
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let oa = ok(&["gen-data", "--config", s(&cfg), "--seed", "5", "--out", s(&a)]);
    ok(&["gen-data", "--config", s(&cfg), "--seed", "5", "--out", s(&b)]);
    assert_eq!(stdout(&oa).lines().count(), 3);
    // the echo records the output path, so it is the one file allowed to differ
    let clips_only = |d: &std::path::Path| {
        let mut m = snapshot(d);
        m.remove(std::path::Path::new("config.echo")).unwrap();
        m
    };
    let (sa, sb) = (clips_only(&a), clips_only(&b));
    assert!(sa.len() > 3);
    assert_eq!(sa, sb);

    let c = tmp.path().join("c");
    ok(&["gen-data", "--config", s(&cfg), "--seed", "6", "--out", s(&c)]);
    assert_ne!(clips_only(&c), sa);
}

#[test]
fn flags_override_config_and_echo_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "gates = [\"spag=off\", \"memog=off\"]\n");
    let run = tmp.path().join("run");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--gate",
        "spag=on",
        "--seed",
        "4",
        "--out",
        s(&run),
    ]);

    let echo: toml::Value = toml::from_str(&fs::read_to_string(run.join("config.echo")).unwrap()).unwrap();
    assert_eq!(echo["seed"].as_integer(), Some(4));
    assert_eq!(echo["model"]["gate"]["spag"].as_bool(), Some(true));
    assert_eq!(echo["model"]["gate"]["memog"].as_bool(), Some(false));

    // the echo alone reproduces the run
    let again = tmp.path().join("again");
    ok(&["--config", s(&run.join("config.echo")), "--out", s(&again)]);
    let losses = |d: &std::path::Path| -> Vec<String> {
        read_csv(&d.join("train.csv"))
            .iter()
            .map(|r| r["loss"].clone())
            .collect()
    };
    assert_eq!(losses(&run).len(), 12);
    assert_eq!(losses(&run), losses(&again));
    assert_eq!(
        fs::read(run.join("checkpoint/manifest.json")).unwrap(),
        fs::read(again.join("checkpoint/manifest.json")).unwrap()
    );
}

#[test]
fn resume_continues_the_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data, ck) = trained(tmp.path());
    let run = ck.parent().unwrap();
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--resume",
        s(&ck),
        "--steps",
        "18",
        "--out",
        s(run),
    ]);
    let rows = read_csv(&run.join("train.csv"));
    let steps: Vec<usize> = rows.iter().map(|r| r["step"].parse().unwrap()).collect();
    assert_eq!(steps, (0..18).collect::<Vec<_>>());
    let evals: Vec<f64> = read_csv(&run.join("eval.csv"))
        .iter()
        .map(|r| num(r, "steps"))
        .collect();
    assert_eq!(evals, vec![6.0, 12.0, 18.0]);
}

#[test]
fn eval_writes_one_map_per_frame_and_a_mean_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data, ck) = trained(tmp.path());
    let ev = tmp.path().join("ev");
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&ev),
    ]);
    let rows = read_csv(&ev.join("metrics.csv"));
    let (mean, frames) = rows.split_last().unwrap();
    assert_eq!(mean["clip_id"], "mean");
    assert_eq!(frames.len(), 3);
    assert_eq!(fs::read_dir(ev.join("maps")).unwrap().count(), frames.len());
    for key in ["kld", "cc", "sim"] {
        let avg = frames.iter().map(|r| num(r, key)).sum::<f64>() / frames.len() as f64;
        assert!((avg - num(mean, key)).abs() < 1e-9, "{key}");
    }
}

#[test]
fn ablation_has_eight_rows_and_all_open_matches_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data, ck) = trained(tmp.path());
    let (ev, ab) = (tmp.path().join("ev"), tmp.path().join("ab"));
    ok(&[
        "eval",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&ev),
    ]);
    let o = ok(&[
        "ablate",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&ab),
    ]);
    assert!(stdout(&o).lines().count() >= 8);
    let rows = read_csv(&ab.join("ablation.csv"));
    assert_eq!(rows.len(), 8);
    let open = rows
        .iter()
        .find(|r| r["spag"] == "1" && r["memog"] == "1" && r["mu_infog"] == "1")
        .unwrap();
    let mean = read_csv(&ev.join("metrics.csv")).pop().unwrap();
    for key in ["kld", "cc", "sim", "nss"] {
        assert_eq!(open[key], mean[key], "{key}");
    }
}

#[test]
fn counterfactuals_leave_the_checkpoint_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, data, ck) = trained(tmp.path());
    let before = snapshot(&ck);
    let cf = tmp.path().join("cf");
    ok(&[
        "counterfact",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&cf),
        "--suppress",
        "flow",
    ]);
    assert_eq!(snapshot(&ck), before);
    let rows = read_csv(&cf.join("counterfact.csv"));
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0]["variant"], "Gate-DAP-Full-Model");
    for r in rows.iter().filter(|r| r["variant"].starts_with("Gate-DAP-F ")) {
        assert!(num(r, "map_delta") < 1e-9, "{}", r["variant"]);
        assert!(num(r, "d_cc").abs() < 1e-9 && num(r, "d_kld").abs() < 1e-9);
    }
}
