use std::path::Path;
use std::process::{Command, Output};

use tensormg::expsum::load_weights;

fn tensormg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensormg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const ONE_D: &str = r#"{
  "geometry": {"spatial_dim": 1, "domain": [0, 1], "cookies": [{"lo": [0.25], "hi": [0.75]}]},
  "finest_level": 1,
  "parameters": [{"step": 0.25, "count": 5}],
  "tolerance": 1e-6
}"#;

/// Data rows without the wall-time column.
fn rows(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
        .collect()
}

#[test]
fn solve_converges_and_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.json", ONE_D);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = tensormg(&["solve", "--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8(res.stdout).unwrap();
        assert!(stdout.starts_with("iterations="), "{stdout}");
        assert!(stdout.contains("converged=true"));
    }
    let (a, b) = (std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
    assert!(a.contains("iteration,relative_residual,max_rank,wall_time_ms"));
    assert!(a.contains("# solver = \"mg-modified-jacobi\""));
    assert!(a.contains("# pre_smooth = 5"));
    assert!(rows(&a).len() > 1);
    assert_eq!(rows(&a), rows(&b));
}

#[test]
fn zero_iterations_leaves_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let body = ONE_D.replace("\"tolerance\": 1e-6", "\"max_iterations\": 0");
    let config = write_config(dir.path(), "zero.json", &body);
    let res = tensormg(&["solve", "--config", &config]);
    assert_eq!(res.status.code(), Some(2));
    let stdout = String::from_utf8(res.stdout).unwrap();
    let data: Vec<&str> = stdout
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("iteration") && !l.is_empty())
        .collect();
    assert_eq!(data.len(), 1, "{stdout}");
    assert!(data[0].starts_with("0,1.0"));
}

#[test]
fn config_errors_exit_one_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"geometry": "two-cookie", "finest_level": 1, "colour": 3}"#, "colour"),
        (r#"{"geometry": "two-cookie", "finest_level": 1, "tolerance": "small"}"#, "tolerance"),
        (r#"{"geometry": "two-cookie"}"#, "finest_level"),
        (r#"{"geometry": "two-cookie", "finest_level": 1, "solver": "gauss-seidel"}"#, "solver"),
    ];
    for (i, (body, needle)) in cases.iter().enumerate() {
        let config = write_config(dir.path(), &format!("bad{i}.json"), body);
        let res = tensormg(&["solve", "--config", &config]);
        assert_eq!(res.status.code(), Some(1), "{body}");
        let stderr = String::from_utf8(res.stderr).unwrap();
        assert!(stderr.contains(needle), "{body}: {stderr}");
    }
    let res = tensormg(&["solve", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn verify_galerkin_passes() {
    let dir = tempfile::tempdir().unwrap();
    let res = tensormg(&["verify", "--suite", "galerkin", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(dir.path().join("galerkin_2d.csv").exists());
}

#[test]
fn verify_smoothing_detects_excess_damping() {
    let res = tensormg(&["verify", "--suite", "smoothing", "--omega-factor", "3"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8(res.stdout).unwrap().contains("FAIL"));
}

#[test]
fn verify_rejects_unknown_suite() {
    let res = tensormg(&["verify", "--suite", "everything"]);
    assert_ne!(res.status.code(), Some(0));
}

#[test]
fn weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.txt");
    let res = tensormg(&["weights", "--k", "8", "--R", "100", "--out", path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let w = load_weights(&path).unwrap();
    assert_eq!(w.k(), 8);
    assert_eq!((w.a, w.b), (1.0, 100.0));
    assert!(w.eps > 0.0 && w.eps < 1e-2);

    let res = tensormg(&["weights", "--k", "8", "--R", "100"]);
    assert_eq!(String::from_utf8(res.stdout).unwrap(), std::fs::read_to_string(&path).unwrap());
    assert_eq!(tensormg(&["weights", "--k", "0", "--R", "100"]).status.code(), Some(1));
}
