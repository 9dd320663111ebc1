//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spikedistill"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// A 2-class 8x8 blob set small enough to train in well under a second.
fn tiny_dataset(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.srkd");
    run_ok(&[
        "gen-data",
        "--classes",
        "2",
        "--train-per-class",
        "8",
        "--test-per-class",
        "4",
        "--noise",
        "0.05",
        "--seed",
        "21",
        "-o",
        path.to_str().unwrap(),
    ]);
    path
}

fn train_tiny(dir: &Path, data: &Path, name: &str, epochs: &str) {
    run_ok(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        epochs,
        "--batch-size",
        "8",
        "--name",
        name,
        "--seed",
        "21",
    ]);
}

#[test]
fn gen_data_is_deterministic_and_tagged() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a.srkd");
    let b = tmp.path().join("b.srkd");
    for path in [&a, &b] {
        run_ok(&[
            "gen-data",
            "--classes",
            "3",
            "--train-per-class",
            "5",
            "--test-per-class",
            "2",
            "--seed",
            "7",
            "-o",
            path.to_str().unwrap(),
        ]);
    }
    let bytes_a = fs::read(&a).unwrap();
    let bytes_b = fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(&bytes_a[..4], b"SRKD");
}

#[test]
fn gen_data_rejects_single_class() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "gen-data",
        "--classes",
        "1",
        "-o",
        tmp.path().join("x.srkd").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn train_writes_checkpoint_report_and_epoch_csv() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "2");
    let dir = tmp.path().join("baseline");
    assert!(dir.join("checkpoint.snck").is_file());
    assert!(dir.join("report.json").is_file());
    let csv = fs::read_to_string(dir.join("epochs.csv")).unwrap();
    assert!(csv.starts_with("epoch,train_loss,train_acc_pct,test_acc_pct\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn zero_epoch_train_is_evaluation_only() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "init", "0");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("init").join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 0);
    assert!(report["initial"]["test_acc_pct"].is_number());
}

#[test]
fn identical_train_invocations_write_identical_reports() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "one", "2");
    train_tiny(tmp.path(), &data, "two", "2");
    let one = fs::read(tmp.path().join("one").join("report.json")).unwrap();
    let two = fs::read(tmp.path().join("two").join("report.json")).unwrap();
    assert_eq!(one, two);
    let one = fs::read(tmp.path().join("one").join("checkpoint.snck")).unwrap();
    let two = fs::read(tmp.path().join("two").join("checkpoint.snck")).unwrap();
    assert_eq!(one, two);
}

#[test]
fn missing_dataset_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "train",
        "--data",
        tmp.path().join("nope.srkd").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    let bad = tmp.path().join("bad.snck");
    fs::write(&bad, b"JUNKxxxxxxxxxxxxxxxx").unwrap();
    let out = run(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "eval",
        "--checkpoint",
        bad.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn prune_ratio_outside_unit_interval_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "1");
    let out = run(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "prune",
        "--checkpoint",
        tmp.path().join("baseline/checkpoint.snck").to_str().unwrap(),
        "--ratio",
        "1.5",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn ratio_zero_prune_keeps_the_forward_pass() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "1");
    let ckpt = tmp.path().join("baseline/checkpoint.snck");
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "prune",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--ratio",
        "0",
    ]);
    let eval =
        |c: &Path| -> String {
            run_ok(&[
                "eval",
                "--checkpoint",
                c.to_str().unwrap(),
                "--data",
                data.to_str().unwrap(),
            ])
        };
    assert_eq!(eval(&ckpt), eval(&tmp.path().join("prune-0/checkpoint.snck")));
}

#[test]
fn prune_records_requested_sparsity() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "1");
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "prune",
        "--checkpoint",
        tmp.path().join("baseline/checkpoint.snck").to_str().unwrap(),
        "--ratio",
        "0.5",
        "--data",
        data.to_str().unwrap(),
    ]);
    let record: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("prune-0.5/prune.json")).unwrap(),
    )
    .unwrap();
    let total = record["sparsity"]["total_weights"].as_u64().unwrap();
    let zeros = record["sparsity"]["total_zeros"].as_u64().unwrap();
    assert_eq!(zeros, total / 2);
    assert!(record["eval"]["accuracy_pct"].is_number());
}

#[test]
fn sparse_distill_without_teacher_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    let out = run(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "distill",
        "--data",
        data.to_str().unwrap(),
        "--mode",
        "sparse",
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--teacher"));
}

#[test]
fn default_distill_rejects_small_alpha() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    let out = run(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "distill",
        "--data",
        data.to_str().unwrap(),
        "--mode",
        "default",
        "--teacher-alpha",
        "0.5",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn sparse_distill_runs_and_records_its_teacher() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "2");
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "prune",
        "--checkpoint",
        tmp.path().join("baseline/checkpoint.snck").to_str().unwrap(),
        "--ratio",
        "0.1",
        "--data",
        data.to_str().unwrap(),
    ]);
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "distill",
        "--data",
        data.to_str().unwrap(),
        "--mode",
        "sparse",
        "--teacher",
        tmp.path().join("prune-0.1/checkpoint.snck").to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--seed",
        "21",
    ]);
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("sparse/run-meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["mode"], "sparse");
    assert_eq!(meta["teacher"], "prune-0.1/checkpoint.snck");
    assert_eq!(meta["teacher_prune_ratio"], 0.1);
}

#[test]
fn heterogeneous_sparse_teacher_needs_the_flag() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "1");
    let ckpt = tmp.path().join("baseline/checkpoint.snck");
    let base: Vec<String> = [
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "distill",
        "--data",
        data.to_str().unwrap(),
        "--mode",
        "sparse",
        "--teacher",
        ckpt.to_str().unwrap(),
        "--timesteps",
        "2",
        "--epochs",
        "0",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let refused = run(&base.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(exit_code(&refused), 1);
    let mut allowed = base.clone();
    allowed.push("--allow-heterogeneous-teacher".to_string());
    let ran = run(&allowed.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(exit_code(&ran), 0);
}

#[test]
fn eval_prints_parseable_json() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "1");
    let stdout = run_ok(&[
        "eval",
        "--checkpoint",
        tmp.path().join("baseline/checkpoint.snck").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "train",
        "--out",
        tmp.path().join("eval.json").to_str().unwrap(),
    ]);
    let parsed: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(parsed["split"], "train");
    assert_eq!(parsed["total"], 16);
    assert_eq!(
        fs::read_to_string(tmp.path().join("eval.json")).unwrap(),
        stdout
    );
}

#[test]
fn report_on_empty_directory_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["report", "--dir", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn report_without_baseline_names_the_missing_file() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "other", "1");
    let out = run(&["report", "--dir", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("baseline") && stderr.contains("report.json"),
        "stderr: {stderr}"
    );
}

#[test]
fn report_builds_one_row_per_distilled_run() {
    let tmp = TempDir::new().unwrap();
    let data = tiny_dataset(tmp.path());
    train_tiny(tmp.path(), &data, "baseline", "2");
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "prune",
        "--checkpoint",
        tmp.path().join("baseline/checkpoint.snck").to_str().unwrap(),
        "--ratio",
        "0",
        "--data",
        data.to_str().unwrap(),
    ]);
    run_ok(&[
        "--out-dir",
        tmp.path().to_str().unwrap(),
        "distill",
        "--data",
        data.to_str().unwrap(),
        "--mode",
        "sparse",
        "--teacher",
        tmp.path().join("prune-0/checkpoint.snck").to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--seed",
        "21",
    ]);
    run_ok(&["report", "--dir", tmp.path().to_str().unwrap()]);
    let csv =
        fs::read_to_string(tmp.path().join("report/comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "csv: {csv}");
    assert!(lines[0].starts_with("name,dataset,model,mode,"));
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells[0], "sparse");
    assert_eq!(cells[1], "blobs");
    assert_eq!(cells[2], "mlp");
    let baseline: f64 = cells[6].parse().unwrap();
    let kd: f64 = cells[7].parse().unwrap();
    let improvement: f64 = cells[8].parse().unwrap();
    assert_eq!(improvement, kd - baseline);
    assert!(tmp.path().join("report/baseline-accuracy.svg").is_file());
    assert!(tmp.path().join("report/sparse-accuracy.svg").is_file());
}

#[test]
fn run_suite_resume_skips_finished_steps() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("suite");
    let args = [
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "9",
        "run-suite",
        "--train-per-class",
        "6",
        "--test-per-class",
        "3",
        "--epochs",
        "1",
        "--grid",
        "0.3",
        "--seeds",
        "5",
    ];
    run_ok(&args);
    let manifest_before = fs::read(dir.join("run-manifest.json")).unwrap();
    let mut resume_args: Vec<&str> = args.to_vec();
    resume_args.push("--resume");
    let stdout = run_ok(&resume_args);
    assert_eq!(stdout.matches("resume, artifacts exist").count(), 4);
    assert_eq!(
        fs::read(dir.join("run-manifest.json")).unwrap(),
        manifest_before
    );
}

#[test]
fn bad_config_file_is_a_format_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "{ not json").unwrap();
    let out = run(&[
        "--out-dir",
        tmp.path().join("suite").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "run-suite",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn config_file_feeds_run_suite() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"train_per_class": 6, "test_per_class": 3, "epochs": 1, "grid": [0.1], "seeds": [2]}"#,
    )
    .unwrap();
    let dir = tmp.path().join("suite");
    run_ok(&[
        "--out-dir",
        dir.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "run-suite",
    ]);
    assert!(dir.join("seed-2/sparse-0.1/report.json").is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run-manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["epochs"], 1);
    assert_eq!(manifest["grid"][0], 0.1);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(exit_code(&run(&["--help"])), 0);
    assert_eq!(exit_code(&run(&["--version"])), 0);
    assert_eq!(exit_code(&run(&["train", "--help"])), 0);
    assert_eq!(exit_code(&run(&["--bogus"])), 1);
}
