use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_krein-flow"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn status(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn run_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq");
    let code = status(
        bin()
            .arg("run")
            .arg(scenario("equilibrium_decay.json"))
            .arg("--out")
            .arg(&out),
    );
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["hash"].as_str().unwrap().len() == 64);
}

#[test]
fn tightened_tolerance_fails_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let code = status(
        bin()
            .arg("run")
            .arg(scenario("equilibrium_decay.json"))
            .arg("--out")
            .arg(dir.path())
            .args(["--tol", "decay_rate=0"]),
    );
    assert_eq!(code, 1);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name": "bad", "task": "verify", "generator": {"kind": "diagonal", "eigenvalues": [1.0]},
            "trace": {"kind": "matrix", "rows": [[1.0]]}, "relation": {"kind": "nope"}}"#,
    )
    .unwrap();
    let out = bin().arg("run").arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/relation"), "{err}");

    let unknown_tol = status(
        bin()
            .arg("run")
            .arg(scenario("equilibrium_decay.json"))
            .arg("--out")
            .arg(dir.path().join("o2"))
            .args(["--tol", "bogus=1"]),
    );
    assert_eq!(unknown_tol, 2);
}

#[test]
fn green_eval_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    std::fs::write(
        &cfg,
        r#"{"points": [[0,0,0]], "state": [{"mu": 1.0, "charges": [1.0]}], "probes": [[1,0,0], [0,2,0]]}"#,
    )
    .unwrap();
    let csv = dir.path().join("g.csv");
    let code = status(bin().arg("green-eval").arg(&cfg).arg("--out").arg(&csv));
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "x,y,z,value");
    let v: f64 = rows[1].split(',').nth(3).unwrap().parse().unwrap();
    let expected = (-1.0f64).exp() / (4.0 * std::f64::consts::PI);
    assert!((v - expected).abs() < 1e-14);

    std::fs::write(
        &cfg,
        r#"{"points": [[0,0,0]], "state": [{"mu": 1.0, "charges": [1.0]}], "probes": [[0,0,0]]}"#,
    )
    .unwrap();
    assert_eq!(status(bin().arg("green-eval").arg(&cfg).arg("--out").arg(&csv)), 2);
}
