//! End-to-end tests of the command-line interface: exit codes, file
//! outputs, and determinism contracts.

use std::path::Path;
use std::process::{Command, Output};

fn glstm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glstm"))
        .args(args)
        .env_remove("GLSTM_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Strips the measured wall-time column, which is the one nondeterministic
/// field in the metrics CSV.
fn metrics_without_walltime(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            fields[..fields.len() - 1].join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn tiny_train(out_dir: &Path, seed: &str) -> Output {
    glstm(&[
        "train",
        "--preset",
        "adding-1000",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        seed,
        "--epochs",
        "2",
        "--n",
        "20",
        "--hidden",
        "6",
        "--train-samples",
        "30",
        "--test-samples",
        "20",
        "--batch-size",
        "10",
        "--mu-lo",
        "1",
        "--mu-hi",
        "20",
        "--gate-sigma",
        "8",
    ])
}

#[test]
fn train_writes_metrics_checkpoint_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_train(dir.path(), "7");
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,train_loss,test_loss,test_ler,mean_openness,wall_time_s"
    );
    assert_eq!(lines.len(), 3, "2 epochs -> 2 rows plus header");
    assert!(dir.path().join("checkpoint.json").is_file());
    assert!(dir.path().join("config.json").is_file());
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("final_loss"));
}

#[test]
fn train_same_seed_is_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir_a.path(), "11").status.success());
    assert!(tiny_train(dir_b.path(), "11").status.success());
    assert_eq!(
        metrics_without_walltime(&dir_a.path().join("metrics.csv")),
        metrics_without_walltime(&dir_b.path().join("metrics.csv"))
    );
    assert_eq!(
        std::fs::read_to_string(dir_a.path().join("checkpoint.json")).unwrap(),
        std::fs::read_to_string(dir_b.path().join("checkpoint.json")).unwrap()
    );
}

#[test]
fn smnist_without_data_path_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = glstm(&[
        "train",
        "--preset",
        "smnist",
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--data-dir",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("nowhere"),
        "message must name the path: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_preset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = glstm(&[
        "train",
        "--preset",
        "not-a-preset",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not-a-preset"));
}

#[test]
fn eval_threshold_zero_matches_plain_eval_and_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir.path(), "3").status.success());
    let checkpoint = dir.path().join("checkpoint.json");
    let base = glstm(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--task",
        "adding",
        "--n",
        "20",
        "--count",
        "50",
        "--data-seed",
        "42",
    ]);
    assert!(base.status.success(), "stderr: {}", stderr(&base));
    let base_loss = stdout(&base)
        .split_whitespace()
        .nth(1)
        .unwrap()
        .to_string();

    let mut last_ops = u64::MAX;
    for v_t in ["0.0", "0.001", "0.01", "0.1"] {
        let report_path = dir.path().join(format!("ops_{v_t}.json"));
        let out = glstm(&[
            "eval",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--task",
            "adding",
            "--n",
            "20",
            "--count",
            "50",
            "--data-seed",
            "42",
            "--v-t",
            v_t,
            "--op-report",
            report_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        if v_t == "0.0" {
            let loss = stdout(&out).split_whitespace().nth(1).unwrap().to_string();
            assert_eq!(loss, base_loss, "v_T = 0 must reproduce the plain loss");
        }
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
        let ops = report["thresholded_total"].as_u64().unwrap();
        assert!(ops <= last_ops, "op count increased along the sweep");
        last_ops = ops;
    }
}

#[test]
fn eval_corrupt_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ definitely not a checkpoint").unwrap();
    let out = glstm(&[
        "eval",
        "--checkpoint",
        bad.to_str().unwrap(),
        "--task",
        "adding",
        "--n",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn eval_version_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir.path(), "5").status.success());
    let checkpoint = dir.path().join("checkpoint.json");
    let text = std::fs::read_to_string(&checkpoint)
        .unwrap()
        .replace("\"version\": 1", "\"version\": 99");
    std::fs::write(&checkpoint, text).unwrap();
    let out = glstm(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--task",
        "adding",
        "--n",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("version"));
}

#[test]
fn gradnorm_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir.path(), "9").status.success());
    let out_csv = dir.path().join("gamma.csv");
    let out = glstm(&[
        "gradnorm",
        "--checkpoint",
        dir.path().join("checkpoint.json").to_str().unwrap(),
        "--task",
        "adding",
        "--n",
        "20",
        "--count",
        "10",
        "--samples",
        "10",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert_eq!(text.lines().count(), 21, "header plus one row per step");
    assert_eq!(text.lines().next().unwrap(), "t,gamma");
}

#[test]
fn gradnorm_zero_samples_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir.path(), "13").status.success());
    let out = glstm(&[
        "gradnorm",
        "--checkpoint",
        dir.path().join("checkpoint.json").to_str().unwrap(),
        "--task",
        "adding",
        "--n",
        "20",
        "--samples",
        "0",
        "--out",
        dir.path().join("gamma.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_gate_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    assert!(tiny_train(dir.path(), "17").status.success());
    let checkpoint = dir.path().join("checkpoint.json");
    let csv_a = dir.path().join("gate_a.csv");
    let csv_b = dir.path().join("gate_b.csv");
    for csv in [&csv_a, &csv_b] {
        let out = glstm(&[
            "export-gate",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--t",
            "25",
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    let text = std::fs::read_to_string(&csv_a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&csv_b).unwrap());
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("unit,t=1,"));
    assert!(header.ends_with("t=25"));
    assert_eq!(lines.count(), 6, "one row per hidden unit");
}

#[test]
fn gen_data_is_seed_deterministic_and_rejects_short_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let out = glstm(&[
            "gen-data",
            "--n",
            "12",
            "--count",
            "8",
            "--seed",
            "21",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "same seed must produce identical files"
    );
    let header = std::fs::read_to_string(&a).unwrap();
    assert!(header.starts_with("x_1,"));
    assert!(header.lines().next().unwrap().ends_with(",y"));

    let out = glstm(&[
        "gen-data",
        "--n",
        "1",
        "--count",
        "1",
        "--seed",
        "0",
        "--out",
        dir.path().join("c.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_from_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(
        &config_path,
        r#"
preset = "manual"
out_dir = "ignored"
checkpoint_interval = 10

[train]
task = "adding"
model = "glstm"
hidden = 5
epochs = 3
batch_size = 10
kernel_init = "orthogonal"
candidate_tanh = false
seed = 4

[train.optimizer]
kind = "adam"
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8

[train.lr]
lr_weights = 0.001
lr_gate = 1.0

[train.forget_bias]
kind = "constant"
value = 1.0

[train.gate_init]
sigma = 6.0

[train.gate_init.mu]
kind = "uniform"
lo = 1.0
hi = 15.0

[train.budget]
lambda = 0.0
enabled = false

[data]
kind = "adding"
n = 15
train_per_epoch = 30
test_count = 20
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = glstm(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--epochs",
        "2", // flag overrides the file's 3
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "2 epochs + header");
    // The effective config echo reflects the override.
    let echo = std::fs::read_to_string(out_dir.join("config.json")).unwrap();
    assert!(echo.contains("\"epochs\": 2"));
}

#[test]
fn numeric_blowup_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = glstm(&[
        "train",
        "--preset",
        "adding-1000",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "1",
        "--epochs",
        "30",
        "--n",
        "20",
        "--hidden",
        "6",
        "--train-samples",
        "30",
        "--test-samples",
        "10",
        "--batch-size",
        "10",
        "--mu-lo",
        "1",
        "--mu-hi",
        "20",
        "--gate-sigma",
        "8",
        "--lr",
        "1e200",
    ]);
    assert_eq!(out.status.code(), Some(4), "stderr: {}", stderr(&out));
}
