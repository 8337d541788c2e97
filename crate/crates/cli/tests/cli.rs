use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
[run]
name = tiny
[grid]
half_extent = 24
points = 64
[initial]
center = 0.5, 0.25
velocity = 0.1
[time]
t_end = 16
[snapshots]
per_decade = 24
[expansion]
order = 2
[verify]
window = 4, 16
rescaled_grid = 6, 48
scaling_grid = 12, 96
";

fn nsasym(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsasym"));
    cmd.args(args).env("RUST_LOG", "warn");
    match threads {
        Some(t) => cmd.env("NSASYM_THREADS", t),
        None => cmd.env_remove("NSASYM_THREADS"),
    };
    cmd.output().unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("tiny.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_inspect_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), TINY);
    let out = nsasym(&["run", &cfg], Some("1"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("runs/tiny");
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));

    let out = nsasym(&["inspect", run_dir.join("coefficients.json").to_str().unwrap(), "--coeffs"], None);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("kind,l,beta"));
    let snap = run_dir.join("snapshots/omega_0002.nsaf");
    let out = nsasym(&["inspect", snap.to_str().unwrap()], None);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n = 2"));
    let out = nsasym(&["inspect", snap.to_str().unwrap(), "--field", "--axis", "1"], None);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 65);
    let out = nsasym(&["inspect", run_dir.join("report.json").to_str().unwrap(), "--fits"], None);
    assert!(String::from_utf8_lossy(&out.stdout).contains("omega,Omega2+Omega3,2,0,"));

    let before = fs::read(run_dir.join("report.json")).unwrap();
    let out = nsasym(&["verify", run_dir.to_str().unwrap()], Some("2"));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(fs::read(run_dir.join("report.json")).unwrap(), before);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsasym(&["run", &config(dir.path(), &TINY.replace("t_end = 16", "t_end = 20"))], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("containment"));

    let unstable =
        TINY.replace("velocity = 0.1", "velocity = 2000").replace("t_end = 16", "t_end = 16\ncfl_safety = 40");
    let out = nsasym(&["run", &config(dir.path(), &unstable)], None);
    assert_eq!(out.status.code(), Some(2));

    let strict = TINY.replace("window = 4, 16", "window = 4, 16\nperturbation = -0.0");
    let out = nsasym(&["run", &config(dir.path(), &strict)], None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL rescaled U1 control margin"));

    let out = nsasym(&["inspect", dir.path().join("nothing.nsaf").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let out = nsasym(&["run", &config(dir.path(), TINY)], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}
