use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pnpns(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pnpns"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("PNPNS_THREADS", t),
        None => cmd.env_remove("PNPNS_THREADS"),
    };
    cmd.output().unwrap()
}

fn config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "run.json",
        r#"{"grid": {"n_modes": 8}, "time": {"dt": 0.1, "t_final": 0.3, "snapshot_times": [0.3]}}"#,
    );
    let out = pnpns(&["run", &cfg], Some("1"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("output/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let snap = dir.path().join("output/snapshot_000.bin");
    let out = pnpns(&["inspect", snap.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("N = 8") && text.contains("step        3"), "{text}");
}

#[test]
fn invalid_config_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "bad.json",
        r#"{"grid": {"n_modes": 8}, "time": {"dt": 0.0, "t_final": 0.3}, "output": {"dir": "out"}}"#,
    );
    let out = pnpns(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!dir.path().join("out").exists());

    let cfg = config(
        dir.path(),
        "conv.json",
        r#"{"grid": {"n_modes": 8}, "time": {"dt": 0.1, "t_final": 0.5},
            "convergence": {"dt_list": [0.3, 0.1]}, "output": {"dir": "out"}}"#,
    );
    assert_eq!(pnpns(&["convergence", &cfg], None).status.code(), Some(1));
    assert!(!dir.path().join("out").exists());

    assert_eq!(pnpns(&["run", "/nonexistent/config.json"], None).status.code(), Some(1));
    assert_eq!(pnpns(&["inspect", &cfg], None).status.code(), Some(1));
    assert_eq!(pnpns(&["run", &cfg], Some("zero")).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // one Newton iteration with a tight tolerance cannot converge from blobs
    let cfg = config(
        dir.path(),
        "fail.json",
        r#"{"physics": {"epsilon": 1, "kappa": 10000, "diffusion": 1, "viscosity": 1},
            "grid": {"n_modes": 16}, "time": {"dt": 1e-3, "t_final": 2e-3},
            "solver": {"newton_max_iter": 1, "newton_tol": 1e-14},
            "initial": {"preset": "blobs_5_2"}}"#,
    );
    let out = pnpns(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // diagnostics up to the failure are still written
    let csv = fs::read_to_string(dir.path().join("output/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn convergence_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "conv.json",
        r#"{"grid": {"n_modes": 16}, "time": {"dt": 0.01, "t_final": 0.02},
            "convergence": {"dt_list": [0.01, 0.005]}}"#,
    );
    let out = pnpns(&["convergence", &cfg], Some("2"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("err_psi"));
    let csv = fs::read_to_string(dir.path().join("output/convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
