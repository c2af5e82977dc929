use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ompc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ompc")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = ompc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_and_analyze_gabor() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("g.txt");
    ok_json(&["generate", "matrix", "--kind", "gabor", "--n", "7", "--out", s(&x)]);
    let v = ok_json(&["analyze", s(&x)]);
    assert_eq!(v["p"], 49);
    assert!((v["mu"].as_f64().unwrap() - 1.0 / 7f64.sqrt()).abs() < 1e-10);
    assert_eq!(v["satisfied"], false);
}

#[test]
fn noiseless_round_trip_recovers_support() {
    let dir = tempfile::tempdir().unwrap();
    let [x, b, y, est] = ["x", "b", "y", "est"].map(|f| dir.path().join(format!("{f}.txt")));
    ok_json(&["generate", "matrix", "--kind", "gabor", "--n", "11", "--out", s(&x)]);
    let sig = ok_json(&[
        "generate", "signal", "--p", "121", "--k", "2", "--phase", "random-sign", "--seed", "3", "--out", s(&b),
    ]);
    ok_json(&["generate", "observation", "--matrix", s(&x), "--signal", s(&b), "--out", s(&y)]);
    let mut truth: Vec<u64> = sig["support"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    for mode in [&["--k", "2"][..], &["--delta", "0"][..], &["--k", "2", "--sost"][..]] {
        let mut args = vec!["solve", "--matrix", s(&x), "--observation", s(&y), "--debias", "--out", s(&est)];
        args.extend_from_slice(mode);
        let r = ok_json(&args);
        let mut got: Vec<u64> = r["support"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        got.sort_unstable();
        truth.sort_unstable();
        assert_eq!(got, truth, "{mode:?}");
    }
    let est_text = std::fs::read_to_string(&est).unwrap();
    assert!(est_text.starts_with("121 2"));
    let cert = ok_json(&["certify", "--matrix", s(&x), "--signal", s(&b), "--sigma", "0.01"]);
    assert_eq!(cert["k"], 2);
}

#[test]
fn diagnostics_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.txt");
    ok_json(&["generate", "matrix", "--kind", "gaussian", "--n", "8", "--p", "16", "--seed", "2", "--out", s(&x)]);
    let z = dir.path().join("z.txt");
    std::fs::write(&z, "2\n1,0\n0,1\n").unwrap();
    let v = ok_json(&["stoc", "--matrix", s(&x), "--k", "2", "--trials", "50", "--seed", "1", "--z-file", s(&z)]);
    assert_eq!(v["trials"], 50);
    let v = ok_json(&["conditioning", "--matrix", s(&x), "--k", "3", "--trials", "50", "--seed", "1"]);
    assert!(v["probability"].as_f64().unwrap() <= 1.0);
    let v = ok_json(&["noise-sup", "--matrix", s(&x), "--sigma", "1", "--trials", "200", "--seed", "1"]);
    assert_eq!(v["trials"], 200);
    let w = dir.path().join("w.txt");
    let v = ok_json(&["wiggle", "--matrix", s(&x), "--out", s(&w)]);
    assert!(v["nu_after"].as_f64().unwrap() <= v["nu_before"].as_f64().unwrap());
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        r#"
master_seed = 5

[[cell]]
k = 2
sigma2 = 0.0
solver = "omp-fixed"
trials = 20
matrix = { kind = "gabor", n = 7 }
signal = { amplitudes = { kind = "flat", min = 1.0 }, phase = "random-uniform" }

[[cell]]
k = 2
sigma2 = 0.5
solver = "omp-stopping"
trials = 20
matrix = { kind = "gabor", n = 7 }
signal = { amplitudes = { kind = "flat", min = 1.0 }, phase = "random-uniform" }
"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok_json(&["experiment", "--config", s(&cfg), "--out-dir", s(&a)]);
    ok_json(&["experiment", "--config", s(&cfg), "--out-dir", s(&b), "--workers", "2"]);
    let csv = std::fs::read(a.join("trials.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("trials.csv")).unwrap());
    assert_eq!(csv.iter().filter(|&&c| c == b'\n').count(), 41);
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], true);
    let v = ok_json(&["compare", "--config", s(&cfg), "--cell", "0"]);
    assert_eq!(v["rates"].as_array().unwrap().len(), 3);
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.txt");
    let out = ompc(&["generate", "matrix", "--kind", "gabor", "--n", "9", "--out", s(&x)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a prime"));
    std::fs::write(&x, "2 2\n1,0 0,0\n0,0 2,0\n").unwrap();
    let out = ompc(&["analyze", s(&x)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("column 2"));
}
