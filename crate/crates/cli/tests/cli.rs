use std::path::Path;
use std::process::{Command, Output};

fn qmon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmon"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("qmon runs")
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{ "pool": { "count": 2, "families": ["tree", "svm"] },
             "crossval": { "k": 3, "trainers": [ { "kind": "single", "family": "tree" } ] } }"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_writes_requested_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmon(dir.path(), &["synth", "--n", "2270", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2271);
    assert!(csv.lines().next().unwrap().ends_with(",label"));
    assert!(dir.path().join("schema.json").exists());
    assert!(dir.path().join("ground_truth.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["synth", "--bogus"], &[]] {
        let out = qmon(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"), "{args:?}");
    }
    let help = qmon(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // no data yet
    assert_eq!(qmon(dir.path(), &["pool"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{ "no_such_field": 1 }"#).unwrap();
    let out = qmon(dir.path(), &["synth", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(qmon(dir.path(), &["synth", "--defect-rate", "1.5"]).status.code(), Some(2));

    assert!(qmon(dir.path(), &["synth", "--n", "300"]).status.success());
    let cfg = small_config(dir.path());
    assert!(qmon(dir.path(), &["pool", "--config", &cfg]).status.success());
    let out = qmon(dir.path(), &["select", "--config", &cfg, "--strategy", "sad", "--fusion", "trained"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qmon(dir.path(), &["select", "--config", &cfg, "--strategy", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    // mean fusion over trees needs allow_mixed_mean
    let out = qmon(dir.path(), &["select", "--config", &cfg, "--fusion", "mean"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(qmon(dir.path(), &["doe", "--model", "absent"]).status.code(), Some(2));
    assert_eq!(qmon(dir.path(), &["serve", "--bind", "nowhere"]).status.code(), Some(2));
}

#[test]
fn select_writes_record_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(qmon(dir.path(), &["synth", "--n", "400", "--seed", "3"]).status.success());
    assert!(qmon(dir.path(), &["pool", "--config", &cfg, "--seed", "3"]).status.success());
    let out = qmon(dir.path(), &["select", "--config", &cfg, "--seed", "3", "--strategy", "sad", "--fusion", "vote"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("store/index.json").exists());
    assert!(dir.path().join("store/defect.json").exists());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("select_report.json")).unwrap()).unwrap();
    assert_eq!(report["strategy"], "sad");
    assert_eq!(report["fusion"], "vote");
    assert!(report["validation"]["s01"].is_number());

    let out = qmon(dir.path(), &["doe", "--config", &cfg, "--levels", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("envelope/basis_weight.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("level,lower,upper"));
    assert_eq!(csv.lines().count(), 5);
}
