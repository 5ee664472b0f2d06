use std::path::Path;
use std::process::{Command, Output};

use automl::synth;

fn automl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_automl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report/job_report.json")).expect("job report");
    serde_json::from_str(&text).expect("json")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn missing_target_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = automl(&["fit", "--input", "x.csv", "--output-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--target"));
}

#[test]
fn unknown_flag_and_bad_epsilon_are_usage_errors() {
    assert_eq!(automl(&["fit", "--bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = automl(&[
        "fit", "--input", "x.csv", "--target", "y", "--output-dir", s(dir.path()), "--epsilon", "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_input_fails_with_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = automl(&[
        "fit",
        "--input",
        s(&dir.path().join("absent.csv")),
        "--target",
        "y",
        "--output-dir",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(dir.path())["status"], "failed");
}

#[test]
fn generate_writes_definitions_and_runs_no_trials() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::imbalanced_binary(300, 1).write(dir.path()).unwrap();
    let out_dir = dir.path().join("out");
    let out = automl(&["generate", "--input", s(&data), "--target", "label", "--output-dir", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let defs = std::fs::read_dir(out_dir.join("candidates")).unwrap().count();
    assert_eq!(defs, 10);
    let r = report(&out_dir);
    assert_eq!(r["status"], "generated_only");
    assert_eq!(r["trials_issued"], 0);
    assert!(!out_dir.join("trials.jsonl").exists());
    assert!(out_dir.join("report/data_analysis.md").exists());
}

#[test]
fn fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::multiclass(400, 2).write(dir.path()).unwrap();
    let out_dir = dir.path().join("out");
    let out = automl(&[
        "fit",
        "--input",
        s(&data),
        "--target",
        "class",
        "--output-dir",
        s(&out_dir),
        "--budget",
        "20",
        "--parallelism",
        "2",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for entry in ["report", "folds", "candidates", "transformed", "models", "leaderboard.json", "trials.jsonl"] {
        assert!(out_dir.join(entry).exists(), "{entry} missing");
    }
    let r = report(&out_dir);
    assert_eq!(r["status"], "completed");
    assert!(r["trials_issued"].as_u64().unwrap() <= 20);

    let board: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("leaderboard.json")).unwrap()).unwrap();
    assert_eq!(board["metric"], "error_rate");
    let model = out_dir.join(board["entries"][0]["model_path"].as_str().unwrap());
    let preds = dir.path().join("preds.csv");
    let out = automl(&[
        "predict",
        "--model",
        s(&model),
        "--input",
        s(&out_dir.join("folds/valid.csv")),
        "--output",
        s(&preds),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&preds).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("prediction,proba_"));
    assert_eq!(header.split(',').count(), 6);
    let rows = std::fs::read_to_string(out_dir.join("folds/valid.csv")).unwrap().lines().count();
    assert_eq!(text.lines().count(), rows);
}

#[test]
fn rerun_rejects_a_malformed_definition() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::regression(200, 4).write(dir.path()).unwrap();
    let defs = dir.path().join("defs");
    std::fs::create_dir_all(&defs).unwrap();
    std::fs::write(defs.join("01-broken.toml"), "[pipeline]\nid = 3\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = automl(&[
        "rerun",
        "--definitions",
        s(&defs),
        "--input",
        s(&data),
        "--target",
        "y",
        "--output-dir",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out_dir);
    assert_eq!(r["status"], "failed");
    assert!(r["message"].as_str().unwrap().contains("01-broken.toml"));
}

#[test]
fn config_file_supplies_the_job() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::regression(200, 5).write(dir.path()).unwrap();
    let out_dir = dir.path().join("out");
    let cfg = dir.path().join("job.toml");
    std::fs::write(
        &cfg,
        format!(
            "input = {:?}\ntarget = \"y\"\noutput_dir = {:?}\nmode = \"generate_only\"\n\n[[catalog]]\nname = \"lab.box\"\nmemory_bytes = 1e6\nhourly_cost = 0.5\n",
            s(&data),
            s(&out_dir)
        ),
    )
    .unwrap();
    let out = automl(&["fit", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out_dir)["status"], "generated_only");
    for entry in std::fs::read_dir(out_dir.join("candidates")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(text.contains("instance = \"lab.box\""));
        assert!(text.contains("over_capacity = true"));
    }
}
