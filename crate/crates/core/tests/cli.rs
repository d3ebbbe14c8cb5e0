use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bitesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitesim")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert!(bitesim(&["--help"]).status.success());
    assert!(bitesim(&["--version"]).status.success());
}

#[test]
fn bad_arguments_exit_with_one() {
    assert_eq!(bitesim(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = bitesim(&["simulate", "--alpha", "150", "--out", path(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("angle"));
    let r = bitesim(&["sweep", "--phase", "entry", "--threads", "0", "--out", path(&out)]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let r = bitesim(&["rig-info", "--config", path(&dir.path().join("nope.toml"))]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nope.toml"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.toml");
    fs::write(&cfg, "[jaw]\nmax_opening = 0.3\n").unwrap();
    assert_eq!(bitesim(&["rig-info", "--config", path(&cfg)]).status.code(), Some(1));
}

#[test]
fn make_head_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("head.tetmesh");
    let r = bitesim(&["make-head", "--out", path(&mesh)]);
    assert!(r.status.success());
    let made = String::from_utf8(r.stdout).unwrap();
    let count = made.split_whitespace().next().unwrap().to_string();
    let r = bitesim(&["validate", "--mesh", path(&mesh)]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.starts_with("ok "));
    assert!(text.contains(&count), "{text} vs {made}");
}

#[test]
fn validate_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("bad.tetmesh");
    fs::write(&mesh, "tetmesh v1\nvertices 1\n0 0\n").unwrap();
    assert_eq!(bitesim(&["validate", "--mesh", path(&mesh)]).status.code(), Some(1));
}

#[test]
fn rig_info_lists_tendons() {
    let r = bitesim(&["rig-info"]);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.starts_with("tendon 0 part="));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = bitesim(&["simulate", "--window", "entry-and-close", "--plot", "--out", path(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8(r.stdout).unwrap();
    assert!(stdout.starts_with("status=ok peak_N="));

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("step,time_s,num_contacts,f_t_N"));
    let steps = trace.lines().count() - 1;
    assert!(stdout.contains(&format!("steps={steps} ")));

    let run = fs::read_to_string(out.join("run.csv")).unwrap();
    assert_eq!(run.lines().count(), 2);
    assert!(run.lines().nth(1).unwrap().starts_with("90,0.07,90,0.01,"));

    let schedule = fs::read_to_string(out.join("schedule.txt")).unwrap();
    assert!(schedule.starts_with("key t=0 phase=approach"));
    let plot = fs::read_to_string(out.join("plot.dat")).unwrap();
    assert!(plot.starts_with("# time_s f_t_N\n"));
    assert!(plot.lines().count() < steps);
}
