use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use churn_cli::{
    cmd_compare, cmd_eda, cmd_evaluate, cmd_train, Overrides, RunConfig, Selection, Subset,
};
use churn_core::metrics::MetricReport;
use churn_core::persist::ModelKind;

fn data_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/Telco-Customer-Churn.csv")
}

fn config(out: &Path, model: Selection) -> RunConfig {
    Overrides {
        data: Some(data_path()),
        out: Some(out.to_path_buf()),
        model: Some(model),
        ..Overrides::default()
    }
    .resolve("test")
    .unwrap()
}

fn churn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_churn"))
}

#[test]
fn eda_writes_figures_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Selection::Mlp);
    let summary = cmd_eda(&cfg).unwrap();
    assert!((summary.dataset.churn_fraction - 0.265).abs() < 1e-3);
    let names = [
        "fig1_charges.csv",
        "fig2_clv.csv",
        "fig3_tenure.csv",
        "summary.json",
        "config.json",
    ];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    assert!(String::from_utf8_lossy(&first[0]).starts_with("segment,count,mean"));
    cmd_eda(&cfg).unwrap();
    let second: Vec<Vec<u8>> = names
        .iter()
        .map(|n| fs::read(dir.path().join(n)).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn missing_data_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = churn()
        .args(["eda", "--data", "/nonexistent/telco.csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/telco.csv"));
}

#[test]
fn zero_epochs_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = churn()
        .args(["train", "--max-epochs", "0", "--data"])
        .arg(data_path())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to train"));
}

#[test]
fn train_then_evaluate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Selection::Mlp);
    let run = cmd_train(&cfg).unwrap();
    assert!(
        run.report.accuracy >= 0.78,
        "accuracy {}",
        run.report.accuracy
    );
    for f in [
        "model.json",
        "pipeline.json",
        "metrics.json",
        "history.csv",
        "config.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let report = cmd_evaluate(&cfg, &dir.path().join("model.json"), None, Subset::Test).unwrap();
    assert_eq!(report, run.report);
    let written: MetricReport =
        serde_json::from_slice(&fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(written, run.report);

    // With c_fp = 0 only false negatives cost anything.
    let mut free_fp = cfg.clone();
    free_fp.costs.c_fp = 0.0;
    free_fp.costs.c_fn = 7.0;
    let report =
        cmd_evaluate(&free_fp, &dir.path().join("model.json"), None, Subset::Test).unwrap();
    assert_eq!(report.total_cost, 7.0 * report.confusion.fn_ as f64);
}

#[test]
fn tampered_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Selection::Logreg);
    cmd_train(&cfg).unwrap();
    let path = dir.path().join("model.json");
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["model"]["weights"].as_array_mut().unwrap().pop();
    fs::write(&path, v.to_string()).unwrap();

    let out = churn()
        .args(["evaluate", "--model-file"])
        .arg(&path)
        .arg("--data")
        .arg(data_path())
        .arg("--out")
        .arg(dir.path().join("eval"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.json"));
}

#[test]
fn mismatched_pipeline_is_rejected() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_train(&config(a.path(), Selection::Tree)).unwrap();
    let mut other = config(b.path(), Selection::Tree);
    other.seed = 7;
    other.split.seed = 7;
    cmd_train(&other).unwrap();
    let err = cmd_evaluate(
        &config(a.path(), Selection::Tree),
        &a.path().join("model.json"),
        Some(&b.path().join("pipeline.json")),
        Subset::Test,
    )
    .unwrap_err();
    assert!(format!("{err:#}").contains("trained against pipeline"));
}

#[test]
fn comparison_cells_match_individual_runs() {
    let dir = tempfile::tempdir().unwrap();
    let table = cmd_compare(&config(&dir.path().join("all"), Selection::All)).unwrap();
    assert_eq!(table.rows.len(), 5);
    for row in &table.rows {
        let single = dir.path().join(row.kind.as_str());
        let selection: Selection = row.kind.as_str().parse().unwrap();
        let run = cmd_train(&config(&single, selection)).unwrap();
        assert_eq!(row.accuracy, run.report.accuracy, "{}", row.method);
        assert_eq!(row.weighted_f1, run.report.weighted.f1, "{}", row.method);
        assert_eq!(row.total_cost, run.report.total_cost, "{}", row.method);
    }
    for f in ["comparison.json", "comparison.csv", "comparison.txt"] {
        assert!(dir.path().join("all").join(f).exists());
    }
}

#[test]
fn restricted_comparison_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let table = cmd_compare(&config(dir.path(), Selection::Sgd)).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].kind, ModelKind::Sgd);
}

#[test]
fn network_has_the_highest_comparison_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let table = cmd_compare(&config(dir.path(), Selection::All)).unwrap();
    let best = &table.rows[table.best_accuracy];
    assert_eq!(
        best.kind,
        ModelKind::Mlp,
        "best accuracy row:\n{}",
        table.to_text()
    );
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    fs::write(
        &file,
        format!("data = {}\nseed = 3\nmodel = tree\n", data_path().display()),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = churn()
        .args(["train", "--config"])
        .arg(&file)
        .args(["--seed", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let echoed: RunConfig =
        serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 5);
    assert_eq!(echoed.model, Selection::Tree);
    assert!(!out.join("history.csv").exists());
}

#[test]
fn input_file_is_untouched() {
    let before = fs::read(data_path()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cmd_train(&config(dir.path(), Selection::Sgd)).unwrap();
    assert_eq!(fs::read(data_path()).unwrap(), before);
}
