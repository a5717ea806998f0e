use std::path::Path;
use std::process::Command;

const CASE: &str = r#"
[mesh]
kind = "cartesian"
n = [6, 6, 1]
h = [5.0, 5.0, 2.0]
permeability = 1e-13
porosity = 0.2

[[wells]]
name = "inj"
control = "rate"
target = 1e-5
perforations = [0]

[[wells]]
name = "prod"
control = "bhp"
target = 1e6
perforations = [35]

[time]
dt0 = 0.01
unit = "pvi"
max_steps = 3
"#;

fn write_case(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("case.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn wellfas() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wellfas"))
}

#[test]
fn simulate_writes_outputs_and_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_case(dir.path(), CASE);
    let out = dir.path().join("run");
    let status = wellfas()
        .args(["simulate", "--quiet", "--config"])
        .arg(&cfg)
        .args(["--solver", "newton", "--linear", "direct", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("steps.csv")).unwrap();
    assert!(csv.starts_with("step,dt,CFL,nonlinear_iter,linear_iter,step_time,converged\n"));
    assert!(csv.lines().count() >= 4);
    assert!(out.join("final.vtk").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["solver"], "newton");
    assert_eq!(meta["linear_solver"], "direct");
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["levels_built"], 1);
}

#[test]
fn aborted_runs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let no_producer = CASE.replace("control = \"bhp\"", "control = \"rate\"");
    let cfg = write_case(dir.path(), &no_producer);
    let status = wellfas()
        .args(["simulate", "--quiet", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(!status.success());
    let missing = wellfas()
        .args(["simulate", "--config", "/nonexistent/case.toml"])
        .status()
        .unwrap();
    assert!(!missing.success());
}
