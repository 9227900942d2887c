mod common;

use std::path::Path;
use std::process::{Command, Output};

fn gatqec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatqec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gatqec(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_inspect_mwpm_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dem = common::fixture_path();
    let dem = dem.to_str().unwrap();
    let data = d.join("data");
    ok(&[
        "sample",
        "--dem",
        dem,
        "-n",
        "300",
        "--seed",
        "4",
        "--out",
        data.to_str().unwrap(),
    ]);
    let dets = data.join("detection_events.b8");
    let obs = data.join("obs_flips_actual.01");
    assert_eq!(std::fs::metadata(&dets).unwrap().len(), 300);
    let (dets, obs) = (dets.to_str().unwrap(), obs.to_str().unwrap());

    let report = d.join("inspect.json");
    let text = ok(&["inspect", "--dem", dem, "--out", report.to_str().unwrap()]);
    assert!(text.contains("|V_s|=4, T=2, edges=6"), "{text}");
    let r = read_json(&report);
    assert_eq!(r["teacher"].as_array().unwrap().len(), 6);
    assert_eq!(r["unassigned_mechanisms"], 8);

    let mw = d.join("mwpm.json");
    ok(&[
        "mwpm",
        "--dem",
        dem,
        "--dets",
        dets,
        "--obs",
        obs,
        "--out",
        mw.to_str().unwrap(),
    ]);
    let m = read_json(&mw);
    assert_eq!(m["shots"], 300);
    assert!(m["accuracy"].as_f64().unwrap() > 0.9);
    assert_eq!(m["config"]["data"]["dets"], dets);

    let run = d.join("run");
    ok(&[
        "train",
        "--dem",
        dem,
        "--dets",
        dets,
        "--obs",
        obs,
        "--mode",
        "baseline",
        "--epochs",
        "2",
        "--batch",
        "32",
        "--lambda",
        "0.25",
        "--seed-params",
        "7",
        "--out",
        run.to_str().unwrap(),
    ]);
    let h = read_json(&run.join("history.json"));
    assert_eq!(h["config"]["mode"], "baseline");
    assert_eq!(h["config"]["lambda"], 0.25);
    assert_eq!(h["config"]["model"]["seed"], 7);
    assert_eq!(h["history"].as_array().unwrap().len(), 2);
    for key in ["epoch", "train_loss", "test_acc", "seconds"] {
        assert!(h["history"][0].get(key).is_some(), "missing {key}");
    }
    let csv = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,train_loss,test_acc,seconds"));
    assert_eq!(csv.lines().count(), 3);

    let ev = d.join("eval.json");
    let ckpt = run.join("checkpoint.bin");
    ok(&[
        "eval",
        "--dem",
        dem,
        "--dets",
        dets,
        "--obs",
        obs,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    let e = read_json(&ev);
    assert_eq!(e["shots"], 300);
    let acc = e["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn compare_writes_table_with_matching_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dem = common::fixture_path();
    let dem = dem.to_str().unwrap();
    ok(&["sample", "--dem", dem, "-n", "200", "--out", d.to_str().unwrap()]);
    let out = d.join("cmp");
    let table = ok(&[
        "compare",
        "--dem",
        dem,
        "--dets",
        d.join("detection_events.b8").to_str().unwrap(),
        "--obs",
        d.join("obs_flips_actual.01").to_str().unwrap(),
        "--epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(table.contains("Baseline"));
    assert!(table.contains("Distillation"));
    assert!(table.contains("MWPM"));
    let c = read_json(&out.join("compare.json"));
    assert_eq!(c["mwpm"]["shots"], 40);
    assert_eq!(c["table"].as_array().unwrap().len(), 3);
    assert!(out.join("baseline_history.csv").exists());
    assert!(out.join("distill_history.csv").exists());
}

#[test]
fn errors_exit_nonzero_with_message() {
    let out = gatqec(&["inspect", "--dem", "/nonexistent/model.dem"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/model.dem"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dem");
    std::fs::write(&bad, "repeat 3 {\nerror(0.1) D0\n}\n").unwrap();
    let out = gatqec(&["inspect", "--dem", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("repeat"));

    assert!(!gatqec(&["train", "--dem", "x"]).status.success());
}
