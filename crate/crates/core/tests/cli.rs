use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_convex-ensemble"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn regression_csv(dir: &Path) -> PathBuf {
    let path = dir.join("reg.csv");
    let out = run(&[
        "generate",
        "regression",
        "--n",
        "300",
        "--d",
        "3",
        "--k",
        "3",
        "--hidden",
        "2",
        "--seed",
        "4",
        "--out",
        s(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn last_line_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = regression_csv(dir.path());
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["train", "--data", s(&csv)])), 2);
    assert_eq!(
        code(&run(&["train", "--data", s(&csv), "--target", "y", "--variant", "sgd"])),
        2
    );
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&run(&["train", "--data", s(&missing), "--target", "y"])), 1);
    assert_eq!(code(&run(&["train", "--data", s(&csv), "--target", "nope"])), 1);

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("data = {}\ntarget = y\nwhatever = 3\n", s(&csv))).unwrap();
    assert_eq!(code(&run(&["train", "--config", s(&cfg)])), 2);
}

#[test]
fn config_file_supplies_options() {
    let dir = tempfile::tempdir().unwrap();
    let csv = regression_csv(dir.path());
    let model = dir.path().join("m.json");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# small run\ndata = {}\ntarget = y\nvariant = fw\nhidden = 2\nmax_modules = 3\nout = {}\n",
            s(&csv),
            s(&model)
        ),
    )
    .unwrap();
    // the flag wins over the file
    let out = run(&["train", "--config", s(&cfg), "--variant", "afw"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&model);
    assert_eq!(m["variant"], "afw");
    assert!(m["atoms"].as_array().unwrap().len() <= 3);
}

#[test]
fn ngce_keeps_k_modules() {
    let dir = tempfile::tempdir().unwrap();
    let csv = regression_csv(dir.path());
    let model = dir.path().join("ngce.json");
    let history = dir.path().join("ngce.csv");
    let out = run(&[
        "train",
        "--variant",
        "ngce",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--k",
        "10",
        "--hidden",
        "3",
        "--max-epochs",
        "20",
        "--out",
        s(&model),
        "--history",
        s(&history),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&model);
    assert_eq!(m["atoms"].as_array().unwrap().len(), 10);
    let w: Vec<f64> = m["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w.iter().all(|&x| x > 0.0));
    assert!(std::fs::read_to_string(&history).unwrap().lines().count() > 2);
}

#[test]
fn saved_model_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let csv = regression_csv(dir.path());
    let model = dir.path().join("m.json");
    let train_metrics = dir.path().join("train.json");
    let eval_metrics = dir.path().join("eval.json");
    let out = run(&[
        "train",
        "--variant",
        "pfw",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--hidden",
        "3",
        "--max-modules",
        "6",
        "--out",
        s(&model),
        "--metrics",
        s(&train_metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--data",
        s(&csv),
        "--splits",
        "--json",
        s(&eval_metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(&train_metrics);
    let b = read_json(&eval_metrics);
    for split in ["train", "val", "test"] {
        assert_eq!(a["splits"][split], b["splits"][split], "{split}");
    }
    assert_eq!(a["n_atoms"], b["n_atoms"]);
}

#[test]
fn classification_run_reports_error_rate() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cls.csv");
    let mut text = String::from("a,b,label\n");
    for i in 0..200 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.91).cos();
        let label = u8::from(a + b > 0.0);
        text.push_str(&format!("{a},{b},{label}\n"));
    }
    std::fs::write(&csv, text).unwrap();
    let model = dir.path().join("m.json");
    let metrics = dir.path().join("metrics.json");
    let out = run(&[
        "train",
        "--variant",
        "fw",
        "--task",
        "cls",
        "--data",
        s(&csv),
        "--target",
        "label",
        "--hidden",
        "3",
        "--max-modules",
        "4",
        "--out",
        s(&model),
        "--metrics",
        s(&metrics),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&metrics);
    let err = r["splits"]["test"]["error_rate"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&err));
    assert!(r["splits"]["test"].get("mse").is_none());
}

#[test]
fn compare_emits_every_iteration_of_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let csv = regression_csv(dir.path());
    let table = dir.path().join("cmp.csv");
    let out = run(&[
        "compare",
        "--data",
        s(&csv),
        "--target",
        "y",
        "--hidden",
        "2",
        "--max-modules",
        "5",
        "--early-stop-window",
        "50",
        "--out",
        s(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "variant,iter,train_mse,test_mse");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4 * 5);
    for v in ["nonlinear", "fw", "afw", "pfw"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{v},"))).count(), 5);
    }
    assert_eq!(
        code(&run(&[
            "compare",
            "--data",
            s(&csv),
            "--target",
            "y",
            "--variant",
            "fw"
        ])),
        2
    );
}

#[test]
fn capacity_commands() {
    let out = run(&["capacity", "shatter", "--k", "6"]);
    assert_eq!(code(&out), 0);
    let rows = last_line_json(&out);
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(rows
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["verified"] == true && r["labelings"] == 64));

    let out = run(&[
        "capacity",
        "bound",
        "--cphi",
        "1",
        "--B",
        "1",
        "--delta",
        "0.36787944117144233",
        "--p",
        "1",
        "--n",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let v = last_line_json(&out)["bound"].as_f64().unwrap();
    assert!((v - 8.828_427_124_746_19).abs() < 1e-9);
    assert_eq!(
        code(&run(&[
            "capacity", "bound", "--cphi", "1", "--B", "1", "--delta", "2", "--p", "1", "--n", "1"
        ])),
        2
    );

    let lin = |scale: &str| {
        let out = run(&[
            "capacity",
            "rademacher",
            "--class",
            "lin",
            "--scale",
            scale,
            "--n",
            "40",
            "--draws",
            "50",
            "--functions",
            "30",
        ]);
        assert_eq!(code(&out), 0);
        last_line_json(&out)[0]["estimate"].as_f64().unwrap()
    };
    assert!((lin("10") / lin("1") - 10.0).abs() < 1e-9);

    let out = run(&["generate", "circle", "--k", "5", "--seed", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 6);
}
