#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn segcond(dir: &Path, threads: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_segcond"));
    cmd.current_dir(dir).args(args);
    match threads {
        Some(t) => cmd.env("SEGCOND_THREADS", t),
        None => cmd.env_remove("SEGCOND_THREADS"),
    };
    cmd.output().expect("spawning segcond")
}

/// Runs a command that must succeed and returns its standard output.
pub fn ok(dir: &Path, threads: Option<&str>, args: &[&str]) -> String {
    let out = segcond(dir, threads, args);
    assert!(
        out.status.success(),
        "segcond {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// A small configuration that exercises every stage in a couple of seconds.
pub fn quick_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "seed": 7,
        "test_per_activity": 2,
        "synth": {"videos_per_activity": 4, "feature_dim": 16},
        "tca": {"epochs": 3},
        "condense": {"inversion": {"iterations": 20}},
        "probe": {"epochs": 10, "hidden": 16}
    });
    std::fs::write(&path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
    path
}

/// gen-synth through eval; returns the paths of every artifact by name.
pub fn full_pipeline(dir: &Path, threads: Option<&str>, config: &Path) -> Vec<(&'static str, PathBuf)> {
    let c = config.to_str().unwrap();
    ok(dir, threads, &["gen-synth", "--config", c, "--out", "train", "--test-out", "test"]);
    ok(dir, threads, &["train-gen", "train", "--config", c, "--out", "model.tca"]);
    ok(dir, threads, &["sample", "train", "--config", c, "--out", "selection.json"]);
    ok(
        dir,
        threads,
        &["condense", "train", "--model", "model.tca", "--selection", "selection.json", "--config", c, "--out", "data.cdns"],
    );
    ok(dir, threads, &["decode", "data.cdns", "--out", "decoded"]);
    ok(dir, threads, &["train", "decoded", "--config", c, "--out", "probe.bin"]);
    ok(dir, threads, &["eval", "probe.bin", "test", "--condensed", "data.cdns", "--out", "report.json"]);
    ["model.tca", "selection.json", "data.cdns", "probe.bin", "report.json"]
        .into_iter()
        .map(|name| (name, dir.join(name)))
        .collect()
}
