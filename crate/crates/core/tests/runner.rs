use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nsasym_core::coeffs::MomentTable;
use nsasym_core::field_io::read_header;
use nsasym_core::runner::config::ExperimentConfig;
use nsasym_core::runner::inspect::{inspect, View};
use nsasym_core::runner::report::read_golden;
use nsasym_core::runner::{run, verify_dir, Outcome, RunError, EXIT_CHECKS, EXIT_CONFIG, EXIT_SOLVER};

const SMALL: &str = "\
[run]
name = small
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
[output]
dir = out
";

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn small_run() -> &'static (tempfile::TempDir, Outcome) {
    static RUN: OnceLock<(tempfile::TempDir, Outcome)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&write_config(dir.path(), SMALL)).unwrap();
        (dir, outcome)
    })
}

#[test]
fn small_run_passes_and_writes_every_artifact() {
    let (dir, outcome) = small_run();
    assert_eq!(outcome.dir, dir.path().join("out"));
    assert!(outcome.report.passed, "{:?}", outcome.report.failures());
    assert_eq!(outcome.exit_code(), 0);
    let hash = ExperimentConfig::load(&dir.path().join("exp.cfg")).unwrap().hash();
    for name in [
        "run.json",
        "history.json",
        "norms.csv",
        "coefficients.json",
        "coefficients.csv",
        "profiles/manifest.json",
        "report.json",
        "report.csv",
        "summary.csv",
        "plots/decay_u_q2.svg",
        "plots/decay_omega_q2.svg",
        "plots/rescaled.svg",
    ] {
        let text = fs::read_to_string(outcome.dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(text.contains(&hash), "{name} lacks the config hash");
    }
    assert!(outcome.dir.join("snapshots/omega_0000.nsaf").is_file());
    assert!(outcome.dir.join("profiles/U1.nsaf").is_file());
}

#[test]
fn verify_reproduces_the_report_bitwise() {
    let (_, outcome) = small_run();
    let report = fs::read(outcome.dir.join("report.json")).unwrap();
    let coeffs = fs::read(outcome.dir.join("coefficients.json")).unwrap();
    let again = verify_dir(&outcome.dir).unwrap();
    assert_eq!(again.report, outcome.report);
    assert_eq!(fs::read(outcome.dir.join("report.json")).unwrap(), report);
    assert_eq!(fs::read(outcome.dir.join("coefficients.json")).unwrap(), coeffs);
}

#[test]
fn verify_rejects_a_tampered_config() {
    let (_, outcome) = small_run();
    let copy = tempfile::tempdir().unwrap();
    for name in ["run.json", "history.json", "coefficients.json"] {
        fs::copy(outcome.dir.join(name), copy.path().join(name)).unwrap();
    }
    fs::write(copy.path().join("config.cfg"), SMALL.replace("order = 2", "order = 1")).unwrap();
    let err = verify_dir(copy.path()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn inspect_artifacts() {
    let (_, outcome) = small_run();
    let header = inspect(&outcome.dir.join("snapshots/omega_0001.nsaf"), View::Auto).unwrap();
    assert!(header.contains("N = 64") && header.contains("L = 24") && header.contains("rank = Scalar"));
    let slice = inspect(&outcome.dir.join("snapshots/omega_0001.nsaf"), View::Field { axis: 1 }).unwrap();
    assert_eq!(slice.lines().count(), 65);
    let table = inspect(&outcome.dir.join("coefficients.json"), View::Auto).unwrap();
    let rows: Vec<(u32, usize)> = table
        .lines()
        .skip(1)
        .map(|line| {
            let quoted: Vec<&str> = line.split('"').collect();
            let l = quoted[0].split(',').nth(1).unwrap().parse().unwrap();
            (l, quoted[1].split(',').map(|v| v.parse::<usize>().unwrap()).sum())
        })
        .collect();
    assert!(!rows.is_empty());
    assert!(rows.windows(2).all(|w| w[0] <= w[1]), "{rows:?}");
    let fits = inspect(&outcome.dir.join("report.json"), View::Fits).unwrap();
    assert!(fits.lines().any(|l| l.starts_with("u,U1,2,0,")));
    assert!(inspect(&outcome.dir.join("missing.json"), View::Auto).is_err());
    assert!(inspect(&outcome.dir.join("norms.csv"), View::Auto).is_err());
}

#[test]
fn coefficient_table_round_trips() {
    let (_, outcome) = small_run();
    let table = MomentTable::load_json(&outcome.dir.join("coefficients.json")).unwrap();
    assert_eq!(table.config_hash, outcome.report.config_hash);
    assert!(table.spacetime.values().all(|c| c.run_id.starts_with("small-")));
    let h = read_header(&outcome.dir.join("profiles/U1.nsaf")).unwrap();
    assert_eq!((h.points, h.half_extent, h.time), (96, 12.0, 1.0));
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let err = run(&write_config(dir.path(), &SMALL.replace("t_end = 16", "t_end = 17"))).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    assert!(err.to_string().contains("containment"), "{err}");
    let err = run(&dir.path().join("absent.cfg")).unwrap_err();
    assert!(matches!(err, RunError::Config(_)));
    let err = run(&write_config(dir.path(), &SMALL.replace("center = 0.5, 0.25", "center = 23, 0"))).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn unstable_steps_abort_the_solver() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("velocity = 0.1", "velocity = 2000").replace("t_end = 16", "t_end = 16\ncfl_safety = 40");
    let err = run(&write_config(dir.path(), &text)).unwrap_err();
    assert!(matches!(err, RunError::Solver(_)), "{err}");
    assert_eq!(err.exit_code(), EXIT_SOLVER);
}

#[test]
fn golden_mismatch_fails_the_checks() {
    let (dir, _) = small_run();
    let golden = dir.path().join("golden.csv");
    fs::write(&golden, "metric,value,tolerance\nu slope q=2,5.0,0.01\n").unwrap();
    assert_eq!(read_golden(&golden).unwrap()["u slope q=2"], (5.0, 0.01));
    let mut cfg = ExperimentConfig::load(&dir.path().join("exp.cfg")).unwrap();
    cfg.golden = Some(golden);
    let out = tempfile::tempdir().unwrap();
    cfg.output = out.path().to_path_buf();
    cfg.verify.q = vec![2.0];
    let outcome = nsasym_core::runner::run_config(&cfg, SMALL).unwrap();
    assert_eq!(outcome.exit_code(), EXIT_CHECKS);
    let failed: Vec<_> = outcome.report.failures().iter().map(|c| c.name.clone()).collect();
    assert_eq!(failed, vec!["golden u slope q=2".to_string()]);
    let again = verify_dir(out.path()).unwrap();
    assert_eq!(again.report.failures().len(), 1);
}
