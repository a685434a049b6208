#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_TOML: &str = r#"
[model]
clip_len = 2
gru_hidden = 32
gru_input = 8
decoder_width = 4
[model.encoder]
image_size = 16
patch_size = 4
embed_dim = 8
depth = 1
num_heads = 2
[train]
steps = 12
log_every = 0
eval_every = 6
checkpoint_every = 0
[data]
clips = 3
[data.scene]
image_size = 16
clip_len = 2
sigma = 1.5
"#;

pub fn gatedap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatedap"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Run and insist on exit 0.
pub fn ok(args: &[&str]) -> Output {
    let o = gatedap(args);
    assert_eq!(
        code(&o),
        0,
        "gatedap {args:?}\nstdout:\n{}\nstderr:\n{}",
        stdout(&o),
        stderr(&o)
    );
    o
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `extra` goes first so it may hold top-level keys.
pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, format!("{extra}{SMALL_TOML}")).unwrap();
    p
}

pub type Row = BTreeMap<String, String>;

pub fn read_csv(path: &Path) -> Vec<Row> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

pub fn num(row: &Row, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Small data set and a briefly trained checkpoint in `dir`.
pub fn trained(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = write_config(dir, "");
    let data = dir.join("data");
    let run = dir.join("run");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);
    (cfg, data, run.join("checkpoint"))
}
