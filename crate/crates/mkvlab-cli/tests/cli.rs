//! End-to-end checks of the executable: exit codes, artifact
//! determinism, and ledger aggregation.

use std::path::Path;
use std::process::Command;

fn mkvlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mkvlab"))
}

fn write_config(dir: &Path, seed: u64) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[model]
name = "bang_bang"

[grid]
n_steps = 8

[mc]
particles = 32
worlds = 4
seed = {seed}

[output]
dir = "{}"
"#,
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn value_subcommand_writes_artifact_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 7);
    let status = mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "value"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("out/value.json").exists());
    assert!(dir.path().join("out/ledger.csv").exists());
}

#[test]
fn identical_configs_yield_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 7);
    let run = || {
        mkvlab()
            .args(["--config", cfg.to_str().unwrap(), "value"])
            .status()
            .unwrap()
    };
    assert!(run().success());
    let first = std::fs::read(dir.path().join("out/value.json")).unwrap();
    assert!(run().success());
    let second = std::fs::read(dir.path().join("out/value.json")).unwrap();
    assert_eq!(first, second);
    // Worker count must not change the artifact either.
    let status = mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "--jobs", "1", "value"])
        .status()
        .unwrap();
    assert!(status.success());
    let third = std::fs::read(dir.path().join("out/value.json")).unwrap();
    assert_eq!(first, third);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model]\nname = \"bang_bang\"\n[grid]\nt0 = 5.0\n[mc]\nseed = 1\n")
        .unwrap();
    let status = mkvlab()
        .args(["--config", path.to_str().unwrap(), "value"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[model]\nname = \"no_such_model\"\n[grid]\nn_steps = 4\n[mc]\nseed = 1\n",
    )
    .unwrap();
    let status = mkvlab()
        .args(["--config", path.to_str().unwrap(), "value"])
        .status()
        .unwrap();
    // The model lookup happens at run time → runtime error exit.
    assert!(matches!(status.code(), Some(2) | Some(3)));
}

#[test]
fn report_aggregates_and_flags_mixed_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 7);
    let out = dir.path().join("out");
    assert!(mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "wasserstein"])
        .status()
        .unwrap()
        .success());
    // Same config → aggregation fine.
    let status = mkvlab()
        .args(["--out", out.to_str().unwrap(), "report"])
        .status()
        .unwrap();
    assert!(status.success());
    // A different seed changes the hash → refuse without the flag.
    assert!(mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "--seed", "8", "wasserstein"])
        .status()
        .unwrap()
        .success());
    let status = mkvlab()
        .args(["--out", out.to_str().unwrap(), "report"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let status = mkvlab()
        .args(["--out", out.to_str().unwrap(), "report", "--allow-mixed"])
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn seed_override_changes_results_not_validity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 7);
    assert!(mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "value"])
        .status()
        .unwrap()
        .success());
    let a = std::fs::read_to_string(dir.path().join("out/value.json")).unwrap();
    assert!(mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "--seed", "99", "value"])
        .status()
        .unwrap()
        .success());
    let b = std::fs::read_to_string(dir.path().join("out/value.json")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn csv_format_emits_long_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 7);
    assert!(mkvlab()
        .args(["--config", cfg.to_str().unwrap(), "--format", "csv", "wasserstein"])
        .status()
        .unwrap()
        .success());
    let text = std::fs::read_to_string(dir.path().join("out/wasserstein.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "subcommand,config_hash,statistic,value,stderr,pass"
    );
    assert!(text.contains("assignment_vs_sorted"));
}

#[test]
fn report_exits_1_when_a_check_failed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(
        out.join("ledger.csv"),
        "timestamp,subcommand,config_hash,statistic,value,stderr,pass\n\
         0,dpp,aaaa,residual,9.0e0,0.0e0,false\n",
    )
    .unwrap();
    let status = mkvlab()
        .args(["--out", out.to_str().unwrap(), "report"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
