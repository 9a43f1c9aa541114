//! End-to-end tests of the `evcp` binary: exit codes, artifact flow
//! between subcommands, and cross-stage fingerprint checks.

use std::path::Path;
use std::process::{Command, Output};

fn evcp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, expected: i32) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(
        out.status.code(),
        Some(expected),
        "expected exit {expected}; stderr: {stderr}"
    );
}

#[test]
fn invalid_task_name_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(
        dir.path(),
        &["generate", "--task", "nonsense", "--out", "d.csv"],
    );
    assert_code(&out, 2);
}

#[test]
fn missing_required_args_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(dir.path(), &["generate", "--task", "binary"]);
    assert_code(&out, 2);
}

#[test]
fn generate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(
        dir.path(),
        &[
            "generate",
            "--data",
            "traffic",
            "--task",
            "multilevel",
            "--n",
            "5000",
            "--seed",
            "7",
            "--out",
            "data.csv",
        ],
    );
    assert_code(&out, 0);
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(text.lines().count(), 5001); // header + rows
    assert!(text.starts_with(
        "avg_speed_mps,flow_counts,avg_occupancy_pct,halting_duration_s,congestion_level"
    ));
    assert!(dir.path().join("data.csv.meta.json").exists());

    // Same config again: identical fingerprint sidecar.
    let rerun = evcp(
        dir.path(),
        &[
            "generate",
            "--data",
            "traffic",
            "--task",
            "multilevel",
            "--n",
            "5000",
            "--seed",
            "7",
            "--out",
            "again.csv",
        ],
    );
    assert_code(&rerun, 0);
    let a = std::fs::read_to_string(dir.path().join("data.csv.meta.json")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("again.csv.meta.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn nonexistent_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(
        dir.path(),
        &[
            "evaluate",
            "--predictions",
            "missing.csv",
            "--truth",
            "missing.csv",
            "--task",
            "binary",
        ],
    );
    assert_code(&out, 3);
}

#[test]
fn full_stage_flow_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = &[
        "--data",
        "traffic",
        "--task",
        "binary",
        "--n",
        "1000",
        "--seed",
        "5",
        "--n-trees",
        "20",
        "--sobol-n",
        "128",
    ];

    let mut sobol_args = vec!["sobol"];
    sobol_args.extend_from_slice(base);
    sobol_args.extend_from_slice(&["--out-dir", "."]);
    assert_code(&evcp(dir.path(), &sobol_args), 0);
    assert!(dir.path().join("sobol.json").exists());
    assert!(dir.path().join("sobol.tsv").exists());
    let selected = std::fs::read_to_string(dir.path().join("selected_features.json")).unwrap();
    let selected: Vec<String> = serde_json::from_str(&selected).unwrap();
    assert!(!selected.is_empty());

    let mut train_args = vec!["train"];
    train_args.extend_from_slice(base);
    train_args.extend_from_slice(&[
        "--features-file",
        "selected_features.json",
        "--out",
        "model.json",
    ]);
    assert_code(&evcp(dir.path(), &train_args), 0);

    // A dataset the model can predict: identical config, so the
    // cross-stage fingerprint check passes.
    let mut gen_args = vec!["generate"];
    gen_args.extend_from_slice(base);
    gen_args.extend_from_slice(&["--out", "data.csv"]);
    assert_code(&evcp(dir.path(), &gen_args), 0);

    let predict = evcp(
        dir.path(),
        &[
            "predict",
            "--model",
            "model.json",
            "--data",
            "data.csv",
            "--alpha",
            "0.03",
            "--out",
            "preds.csv",
        ],
    );
    assert_code(&predict, 0);
    let preds = std::fs::read_to_string(dir.path().join("preds.csv")).unwrap();
    assert!(preds.starts_with("row,label,confidence,lo,hi\n"));
    assert_eq!(preds.lines().count(), 1001);

    let evaluate = evcp(
        dir.path(),
        &[
            "evaluate",
            "--predictions",
            "preds.csv",
            "--truth",
            "data.csv",
            "--task",
            "binary",
            "--compare",
            "traffic_binary",
            "--out",
            "metrics.json",
        ],
    );
    assert_code(&evaluate, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(report["model_kind"], "ml_cp");
    assert!(
        report["metrics"]["classification"]["accuracy"]
            .as_f64()
            .unwrap()
            > 0.9
    );
    // The side-by-side block quotes the published accuracy 0.98.
    assert_eq!(
        report["reference"]["ml_cp"]["accuracy"].as_f64(),
        Some(0.98)
    );
}

#[test]
fn predict_rejects_mismatched_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut train_args = vec!["train"];
    train_args.extend_from_slice(&[
        "--data",
        "traffic",
        "--task",
        "binary",
        "--n",
        "500",
        "--seed",
        "1",
        "--n-trees",
        "5",
        "--out",
        "model.json",
    ]);
    assert_code(&evcp(dir.path(), &train_args), 0);
    // Fire columns do not match the traffic training schema.
    let gen = evcp(
        dir.path(),
        &[
            "generate", "--data", "fire", "--n", "500", "--seed", "1", "--out", "fire.csv",
        ],
    );
    assert_code(&gen, 0);
    let out = evcp(
        dir.path(),
        &[
            "predict",
            "--model",
            "model.json",
            "--data",
            "fire.csv",
            "--out",
            "p.csv",
        ],
    );
    assert_code(&out, 4);
}

#[test]
fn run_writes_summary_and_narrower_intervals_at_higher_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let run = |alpha: &str, out: &str| {
        let out_args = [
            "run",
            "--data",
            "traffic",
            "--task",
            "regression",
            "--n",
            "900",
            "--seed",
            "3",
            "--n-trees",
            "20",
            "--sobol-n",
            "128",
            "--alpha",
            alpha,
            "--out-dir",
            out,
        ];
        assert_code(&evcp(dir.path(), &out_args), 0);
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(out).join("summary.json")).unwrap(),
        )
        .unwrap();
        summary["models"][0]["metrics"]["intervals"]["mean_width"]
            .as_f64()
            .unwrap()
    };
    let wide = run("0.03", "low_alpha");
    let narrow = run("0.3", "high_alpha");
    assert!(
        narrow < wide,
        "width at alpha 0.3 ({narrow}) should be below width at 0.03 ({wide})"
    );
}

#[test]
fn output_root_env_var_sets_default_run_dir() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_evcp"))
        .current_dir(dir.path())
        .env("EVCP_OUTPUT_ROOT", &root)
        .args([
            "run",
            "--data",
            "traffic",
            "--task",
            "binary",
            "--n",
            "500",
            "--seed",
            "2",
            "--n-trees",
            "10",
            "--sobol-n",
            "64",
        ])
        .output()
        .expect("binary runs");
    assert_code(&out, 0);
    let runs: Vec<_> = std::fs::read_dir(&root).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run_dir = runs[0].as_ref().unwrap().path();
    assert!(run_dir
        .file_name()
        .unwrap()
        .to_string_lossy()
        .starts_with("run-"));
    assert!(run_dir.join("summary.json").exists());
}

#[test]
fn fire_screening_selects_temperature_and_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(
        dir.path(),
        &[
            "sobol",
            "--data",
            "fire",
            "--n",
            "2000",
            "--seed",
            "9",
            "--n-trees",
            "30",
            "--sobol-n",
            "256",
            "--out-dir",
            ".",
        ],
    );
    assert_code(&out, 0);
    let selected: Vec<String> = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("selected_features.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(selected, vec!["temperature_c", "smoke_level"]);
}

#[test]
fn quantile_rule_and_scaling_flags_flow_into_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = evcp(
        dir.path(),
        &[
            "run",
            "--data",
            "traffic",
            "--task",
            "regression",
            "--n",
            "600",
            "--seed",
            "8",
            "--n-trees",
            "10",
            "--sobol-n",
            "64",
            "--quantile-rule",
            "n-plus-1",
            "--knn-scale",
            "--out-dir",
            "qr",
        ],
    );
    assert_code(&out, 0);
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("qr/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["config"]["quantile_rule"], "n-plus-1");
    assert_eq!(summary["config"]["knn_scale"], true);
    // The rerun from the config snapshot reproduces the summary exactly.
    let rerun = evcp(
        dir.path(),
        &["run", "--config", "qr/config.json", "--out-dir", "qr2"],
    );
    assert_code(&rerun, 0);
    let a = std::fs::read(dir.path().join("qr/summary.json")).unwrap();
    let b = std::fs::read(dir.path().join("qr2/summary.json")).unwrap();
    assert_eq!(a, b);
}
