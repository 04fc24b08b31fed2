//! End-to-end checks of the command-line binary: artifacts, determinism
//! and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamformer"))
}

fn write_config(dir: &Path, output: &Path) -> std::path::PathBuf {
    let text = format!(
        "model.variant = pi\n\
         model.width = 8\n\
         model.depth = 1\n\
         model.heads = 2\n\
         model.key_dim = 4\n\
         model.window = 16\n\
         trainer.streams = 2\n\
         trainer.chunk_size = 10\n\
         trainer.alpha0 = 3e-2\n\
         data.kind = split_blobs\n\
         data.classes = 8\n\
         data.feature_dim = 4\n\
         data.spread = 0.2\n\
         data.tasks = 5\n\
         data.task_len = 20\n\
         data.ways = 4\n\
         run.output_dir = {}\n\
         run.data_seeds = 0\n",
        output.display()
    );
    let path = dir.join("exp.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_smoke_test_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir);
    let out = binary().arg("run").arg(&config).output().unwrap();
    assert_success(&out);
    assert!(out_dir.join("run_seed0.csv").exists());
    assert!(out_dir.join("summary.txt").exists());
    assert!(out_dir.join("within_task_accuracy.csv").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("seed_0.average_accuracy = "));
    // The config file itself is untouched.
    assert!(config.exists());
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let config = write_config(dir.path(), &out1);
    assert_success(&binary().arg("run").arg(&config).output().unwrap());
    assert_success(&binary().arg("run").arg(&config).arg("--output-dir").arg(&out2).output().unwrap());
    let a = std::fs::read(out1.join("run_seed0.csv")).unwrap();
    let b = std::fs::read(out2.join("run_seed0.csv")).unwrap();
    assert_eq!(a, b, "identical configs must produce byte-identical CSVs");
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir);
    let text = std::fs::read_to_string(&config).unwrap().replace("data.ways = 4", "data.ways = 40");
    std::fs::write(&config, text).unwrap();
    let out = binary().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("data.ways"), "stderr must name the field: {stderr}");
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir);
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.push_str("trainer.momentum = 0.9\n");
    std::fs::write(&config, text).unwrap();
    let out = binary().arg("run").arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trainer.momentum"));
}

#[test]
fn convert_then_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, "0, 1.0\n0, 1.1\n1, 2.0\n0, 0.9\n").unwrap();
    let oclf = dir.path().join("data.oclf");
    assert_success(&binary().arg("convert").arg(&csv).arg(&oclf).output().unwrap());
    let out = binary().arg("oracle").arg(&oclf).arg("--window").arg("1").output().unwrap();
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accuracy = 0.250000"), "{stdout}");
}

#[test]
fn sweep_emits_pareto_front() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let config = write_config(dir.path(), &out_dir);
    let grid = dir.path().join("grid.cfg");
    std::fs::write(&grid, "streams = 1, 2\n").unwrap();
    let out = binary().arg("sweep").arg(&config).arg(&grid).output().unwrap();
    assert_success(&out);
    assert!(out_dir.join("sweep_results.csv").exists());
    assert!(out_dir.join("pareto.csv").exists());
}
