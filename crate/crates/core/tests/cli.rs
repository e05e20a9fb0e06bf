use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_ehr-cvd");

fn run(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("EHR_CVD_OUT")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path, stage: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("manifest.{stage}.json"))).unwrap()).unwrap()
}

#[test]
fn generate_twice_gives_identical_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = run(d, &["generate", "--seed", "7", "--n-patients", "150"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ma, mb) = (manifest(&a, "generate"), manifest(&b, "generate"));
    assert_eq!(ma, mb);
    assert_eq!(ma["outputs"].as_array().unwrap().len(), 3);
    for f in ["events.jsonl", "truth.json", "manifest.generate.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    run(&c, &["generate", "--seed", "8", "--n-patients", "150"]);
    assert_ne!(manifest(&c, "generate")["outputs"], ma["outputs"]);
}

#[test]
fn demo_evaluate_emits_all_horizons_and_report_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["evaluate", "--demo"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["kind"], "metrics");
    for model in metrics["data"].as_array().unwrap() {
        assert_eq!(model["horizons"].as_array().unwrap().len(), 4);
        assert_eq!(model["mean"].as_array().unwrap().len(), 4);
    }
    let o = run(tmp.path(), &["report"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["table2.csv", "table2.txt", "roc_h0.svg", "roc_h3.svg", "manifest.report.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn report_without_metrics_fails_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing metrics artifact"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(tmp.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["generate"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["evaluate", "--events", "x.jsonl"]).status.code(), Some(1));
    assert_eq!(run(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["cohort", "--events", "/nonexistent.jsonl", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_dir_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["generate", "--seed", "1", "--n-patients", "20"])
        .env("EHR_CVD_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("events.jsonl").exists());
}

#[test]
fn pipeline_stages_chain_and_leave_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    assert!(run(&gen, &["generate", "--seed", "5", "--n-patients", "300"]).status.success());
    let events = gen.join("events.jsonl");
    let truth = gen.join("truth.json");
    let before = std::fs::read(&events).unwrap();
    let data = [
        "--events",
        events.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--seed",
        "2",
        "--folds",
        "3",
    ];
    let stage = |dir: &str, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let mut args: Vec<&str> = extra[..1].to_vec();
        args.extend_from_slice(&data);
        args.extend_from_slice(&extra[1..]);
        let o = run(&out, &args);
        assert!(o.status.success(), "{dir}: {}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let c = stage("cohort", &["cohort"]);
    assert!(std::fs::read_to_string(c.join("folds.csv")).unwrap().starts_with("patient_id,fold\n"));
    let f = stage("feat", &["featurize", "--max-days", "10"]);
    assert!(f.join("sequences.jsonl").exists());
    let t = stage("train", &["train", "--model", "mt_gru", "--epochs", "2", "--hidden", "3", "--days-pad", "8"]);
    let m = manifest(&t, "train");
    assert_eq!(m["volatile"][0], "training_log.csv");
    assert!(t.join("model.ckpt").exists());
    let tune = stage("tune", &["tune", "--model", "lr-3", "--budget", "2", "--inner-folds", "2"]);
    assert_eq!(std::fs::read_to_string(tune.join("trials.jsonl")).unwrap().lines().count(), 2);
    let spec = tune.join("best_spec.json");
    stage("train_spec", &["train", "--spec", spec.to_str().unwrap()]);
    let att = stage("att", &["attention", "--epochs", "2", "--hidden", "3", "--days-pad", "8"]);
    assert!(std::fs::read_to_string(att.join("attention.csv")).unwrap().lines().count() > 1);
    let imp = stage(
        "imp",
        &["importance", "--model", "lr-2", "--features", "demographic:AGE", "--repeats", "2"],
    );
    assert_eq!(std::fs::read_to_string(imp.join("importance.csv")).unwrap().lines().count(), 2);
    assert_eq!(std::fs::read(&events).unwrap(), before);
}
