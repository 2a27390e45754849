use std::path::Path;
use std::process::Command;

use flotation::experiments::manifest::{Manifest, MANIFEST_FILE};

const CONFIG: &str = r#"
name = "short"
policies = ["pid", "mpc", "pomcp"]

[feedstock]
horizon = 8

[pomcp]
simulations = 40
max_depth = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flotation"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("short.toml");
    std::fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn run_then_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--seed", "4", "--replicates", "2", "--policies", "pid,pomcp", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let manifest = Manifest::load(&out.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.ok());
    let episodes = std::fs::read_to_string(out.join("episodes").join("short.csv")).unwrap();
    // header plus 2 policies x 2 replicates x 8 steps
    assert_eq!(episodes.lines().count(), 1 + 2 * 2 * 8);
    assert!(!episodes.contains("mpc"));

    let status = bin().arg("replay").arg(out.join(MANIFEST_FILE)).status().unwrap();
    assert!(status.success());
    assert!(out.join("replay").join(MANIFEST_FILE).exists());
}

#[test]
fn replay_detects_tampered_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--replicates", "1", "--policies", "pid", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = Manifest::load(&manifest_path).unwrap();
    manifest.files[0].sha256 = "0".repeat(64);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let status = bin().arg("replay").arg(&manifest_path).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn invalid_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["sweep", "no-such-study", "--out-dir"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "replicates = 0\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
}
