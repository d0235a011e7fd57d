use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barrier-transfer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_prints_the_benchmarks() {
    let o = run(&["list"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "pendulum\ndc-motor\nquadrotor\n");
}

#[test]
fn verify_source_reports_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["verify-source", "--benchmark", "dc-motor", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("certified = true"));
    let csv = fs::read_to_string(dir.path().join("source_verdict.csv")).unwrap();
    assert!(csv.starts_with("condition,ok,checked,violations,worst_margin\n"));

    // the drone source fails its own decrease check at desk spacing
    let o = run(&["verify-source", "--benchmark", "quadrotor", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("certified = false"));
}

#[test]
fn full_run_dc_motor_succeeds_and_certify_target_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["full-run", "--benchmark", "dc-motor", "--out", out, "--rollouts", "20"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("target certified = true"));

    let ctrl = dir.path().join("controller.bin");
    let o = run(&[
        "certify-target",
        "--benchmark",
        "dc-motor",
        "--out",
        out,
        "--controller",
        ctrl.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));

    let o = run(&[
        "simulate",
        "--benchmark",
        "dc-motor",
        "--out",
        out,
        "--controller",
        ctrl.to_str().unwrap(),
        "--rollouts",
        "7",
        "--horizon",
        "30",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 of 7 rollouts entered the unsafe set"));
    let csv = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 31);

    // a controller with the wrong shape is a fault
    let o = run(&[
        "certify-target",
        "--benchmark",
        "quadrotor",
        "--out",
        out,
        "--controller",
        ctrl.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("controller maps 2 -> 1"));
}

#[test]
fn full_run_quadrotor_is_a_fault() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["full-run", "--benchmark", "quadrotor", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: verify-source: "), "{err}");
}

#[test]
fn transfer_with_no_rounds_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "transfer",
        "--benchmark",
        "dc-motor",
        "--max-rounds",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("converged = false"));
    assert!(dir.path().join("controller.bin").exists());
}

#[test]
fn violation_map_for_the_drone_uses_a_slice() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "violation-map",
        "--benchmark",
        "quadrotor",
        "--system",
        "source",
        "--slice",
        "2=0,3=0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("violation_map.csv")).unwrap();
    // one row per cell of the 30 × 30 slice
    assert_eq!(csv.lines().count(), 1 + 900);
}

#[test]
fn bad_arguments_are_rejected() {
    assert_eq!(run(&["verify-source"]).status.code(), Some(2));
    assert_eq!(
        run(&["verify-source", "--benchmark", "pendulum", "--config", "x.toml"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["verify-source", "--benchmark", "segway", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["verify-source", "--benchmark", "dc-motor", "--epsilon", "0", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["transfer", "--benchmark", "dc-motor", "--lr=-1", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    let o = run(&["verify-source", "--config", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));
}

#[test]
fn config_file_behaves_like_the_shipped_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let toml = include_str!("../../core/benchmarks/dc-motor.toml");
    let path = dir.path().join("motor.toml");
    fs::write(&path, toml).unwrap();
    let a = run(&["verify-source", "--config", path.to_str().unwrap(), "--out", out]);
    let b = run(&["verify-source", "--benchmark", "dc-motor", "--out", out]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}
