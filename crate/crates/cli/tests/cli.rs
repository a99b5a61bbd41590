use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn levykit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levykit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn preset_then_density_smoke_path() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let grid = dir.path().join("grid.csv");
    let out = levykit(&["preset", "--name", "stable", "--params", "d=1,alpha=1", "--emit", p(&model)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = levykit(&["density", "--model", p(&model), "--t", "1", "--out", p(&grid)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(&grid).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,p"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, v) = l.split_once(',').unwrap();
            (x.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    let dx = rows[1].0 - rows[0].0;
    let mass: f64 = rows.iter().map(|r| r.1).sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");

    let manifest = read_json(&dir.path().join("grid.csv.manifest.json"));
    assert_eq!(manifest["verb"], "density");
    assert_eq!(manifest["model_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["parameters"]["t"], 1.0);
}

#[test]
fn degenerate_measure_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("flat.json");
    std::fs::write(
        &model,
        r#"{"dimension": 2, "alpha": 1.5, "beta": 1.5, "gamma": 1.0, "drift": [0.0, 0.0],
            "spectral": {"type": "atomic", "directions": [[1.0, 0.0], [-1.0, 0.0]], "weights": [1.0, 1.0]},
            "profile": {"q": {"family": "one"}, "phi": {"family": "one"}}}"#,
    )
    .unwrap();
    let grid = dir.path().join("grid.csv");
    let out = levykit(&["density", "--model", p(&model), "--t", "1", "--out", p(&grid)]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hypothesis") || err.contains("degenerate"), "{err}");
    assert!(!grid.exists());
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&levykit(&["bogus"])), 64);
    assert_eq!(code(&levykit(&["density", "--nope"])), 64);
    // No silent entropy.
    let out = levykit(&["simulate", "--model", "m.json", "--t", "1", "--n", "10", "--out", "s.csv"]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_preset_and_family_are_validation_failures() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    assert_eq!(code(&levykit(&["preset", "--name", "gaussian", "--emit", p(&model)])), 2);
    std::fs::write(
        &model,
        r#"{"dimension": 1, "alpha": 1.0, "beta": 2.0, "gamma": 1.0,
            "spectral": {"type": "atomic", "directions": [[1.0], [-1.0]], "weights": [1.0, 1.0]},
            "profile": {"q": {"family": "one"}, "phi": {"family": "cosine"}}}"#,
    )
    .unwrap();
    let out = levykit(&["exponent", "--model", p(&model), "--out", p(&dir.path().join("e.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_is_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    assert_eq!(code(&levykit(&["preset", "--name", "tempered", "--emit", p(&model)])), 0);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = levykit(&[
            "simulate", "--model", p(&model), "--t", "1", "--n", "9000", "--seed", "7", "--threads", threads, "--out",
            p(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("index,x1,jumps"));
    assert_eq!(text.lines().count(), 9001);
}

#[test]
fn exponent_closed_form_matches_quadrature() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    assert_eq!(
        code(&levykit(&["preset", "--name", "stable", "--params", "d=2,alpha=1.5", "--emit", p(&model)])),
        0
    );
    let read = |closed: bool| {
        let out = dir.path().join(if closed { "c.csv" } else { "q.csv" });
        let mut args = vec!["exponent", "--model", p(&model), "--xi", "1,0;0.3,-2;5,5", "--out", p(&out)];
        if closed {
            args.push("--closed-form");
        }
        assert_eq!(code(&levykit(&args)), 0);
        std::fs::read_to_string(out)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let (q, c) = (read(false), read(true));
    assert_eq!(q.len(), 3);
    for (a, b) in q.iter().zip(&c) {
        let scale = b[2].hypot(b[3]);
        assert!((a[2] - b[2]).hypot(a[3] - b[3]) < 1e-8 * scale, "{a:?} vs {b:?}");
    }
    let bad = levykit(&["exponent", "--model", p(&model), "--xi", "1,2,3", "--out", p(&dir.path().join("x.csv"))]);
    assert_ne!(code(&bad), 0);
}

#[test]
fn relativistic_ratio_table_is_exported() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let table = dir.path().join("k.csv");
    let out = levykit(&[
        "preset", "--name", "relativistic", "--params", "d=1,alpha=1", "--emit", p(&model), "--ratio-table", p(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().next(), Some("s,kernel,ratio"));
    assert_eq!(text.lines().count(), 101);
    let manifest = read_json(&dir.path().join("m.json.manifest.json"));
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_all_on_tempered_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let report = dir.path().join("report.json");
    assert_eq!(code(&levykit(&["preset", "--name", "tempered", "--emit", p(&model)])), 0);
    let out = levykit(&["verify", "--model", p(&model), "--suite", "all", "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let body = read_json(&report);
    assert_eq!(body["suite"], "all");
    let reports = body["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert_eq!(r["pass"], true, "{}", r["suite"]);
        assert!(r["sup_ratio"].as_f64().unwrap().is_finite());
        assert!(r["fitted_constants"].as_object().is_some());
    }
    assert_eq!(body["pass"], true);
}
