//! Experiment pipeline: simulate, persist, extract coefficients, check and report.

pub mod config;
pub mod inspect;
pub mod plot;
pub mod report;
pub mod store;

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::coeffs::MomentTable;
use crate::error::Error;
use crate::expansion::{Expansion, ProfileManifest, DIM};
use crate::extract::extract_table;
use crate::field_io::save_field;
use crate::grid::Grid;
use crate::solver::{amplitude_for_velocity, make_initial_vorticity, simulate, Trajectory};
use config::{AmplitudeRule, ExperimentConfig};
use report::{evaluate, report_csv, summary_csv, write_plots, Report};
use store::write_json;

pub const COEFFICIENTS_FILE: &str = "coefficients.json";
pub const COEFFICIENTS_CSV: &str = "coefficients.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PROFILE_DIR: &str = "profiles";
pub const PLOT_DIR: &str = "plots";
/// Copy of the reference summary a run was compared against.
pub const GOLDEN_FILE: &str = "golden.csv";

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECKS: i32 = 3;

/// Failure of a pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(Error),
    #[error("solver aborted: {0}")]
    Solver(Error),
    #[error("{0}")]
    Pipeline(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Solver(_) | RunError::Pipeline(_) => EXIT_SOLVER,
        }
    }
}

/// Finished run or verification.
#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub report: Report,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            EXIT_CHECKS
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    config_hash: String,
    grid: Grid,
    time: f64,
    profiles: Vec<ProfileEntry>,
}

#[derive(Serialize)]
struct ProfileEntry {
    #[serde(flatten)]
    manifest: ProfileManifest,
    file: String,
}

/// Loads `path` and runs it.
pub fn run(path: &Path) -> Result<Outcome, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(Error::Config(format!("cannot read {}: {e}", path.display()))))?;
    let cfg = ExperimentConfig::load(path).map_err(RunError::Config)?;
    run_config(&cfg, &text)
}

/// Full pipeline into `cfg.output`; `config_text` is copied into the run directory.
pub fn run_config(cfg: &ExperimentConfig, config_text: &str) -> Result<Outcome, RunError> {
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir)
        .map_err(|e| RunError::Config(Error::Config(format!("cannot create {}: {e}", dir.display()))))?;
    if let Some(golden) = &cfg.golden {
        fs::copy(golden, dir.join(GOLDEN_FILE))
            .map_err(|e| RunError::Config(Error::Config(format!("golden summary {}: {e}", golden.display()))))?;
    }
    let grid = Grid::make(DIM, cfg.grid.half_extent, cfg.grid.points).map_err(RunError::Config)?;
    let amplitude = match cfg.initial.amplitude {
        AmplitudeRule::Amplitude(a) => a,
        AmplitudeRule::Velocity(v) => {
            amplitude_for_velocity(&cfg.initial_spec(1.0), &grid, v).map_err(RunError::Config)?
        }
    };
    let omega0 = make_initial_vorticity(&cfg.initial_spec(amplitude), &grid).map_err(RunError::Config)?;

    info!("{}: simulating to t = {} on {} points", cfg.name, cfg.t_end, grid.len());
    let traj = simulate(&omega0, cfg.t_end, &cfg.snapshot_times(), &cfg.solver).map_err(RunError::Solver)?;
    info!("{}: {} steps, {} snapshots", cfg.name, traj.steps, traj.snapshots.len());
    let pipeline = RunError::Pipeline;
    store::write_trajectory(&dir, cfg, config_text, amplitude, &traj).map_err(pipeline)?;

    info!("{}: extracting coefficients up to order {}", cfg.name, cfg.order);
    let mut table = extract_table(&format!("{}-{}", cfg.name, &cfg.hash()[..12]), &omega0, &traj, cfg.order)
        .map_err(pipeline)?
        .table;
    table.config_hash = cfg.hash();
    table.save_json(&dir.join(COEFFICIENTS_FILE)).map_err(pipeline)?;
    fs::write(dir.join(COEFFICIENTS_CSV), format!("# config_hash={}\n{}", cfg.hash(), table.to_csv()))
        .map_err(|e| pipeline(e.into()))?;
    write_profiles(&dir, cfg, &table).map_err(pipeline)?;
    finish(dir, cfg, &traj, &table)
}

/// Re-runs every check on a persisted run directory.
pub fn verify_dir(dir: &Path) -> Result<Outcome, RunError> {
    let mut cfg = ExperimentConfig::load(&dir.join(store::CONFIG_FILE)).map_err(RunError::Config)?;
    let golden = dir.join(GOLDEN_FILE);
    cfg.golden = golden.is_file().then_some(golden);
    let meta = store::read_meta(dir).map_err(RunError::Config)?;
    if meta.config_hash != cfg.hash() {
        return Err(RunError::Config(Error::Config(format!(
            "{} does not match the configuration hash in run.json",
            store::CONFIG_FILE
        ))));
    }
    let traj = store::load_trajectory(dir, &meta).map_err(RunError::Config)?;
    let table = MomentTable::load_json(&dir.join(COEFFICIENTS_FILE)).map_err(RunError::Config)?;
    if table.config_hash != meta.config_hash {
        return Err(RunError::Config(Error::Config(format!("{COEFFICIENTS_FILE} belongs to a different run"))));
    }
    finish(dir.to_path_buf(), &cfg, &traj, &table)
}

fn finish(dir: PathBuf, cfg: &ExperimentConfig, traj: &Trajectory, table: &MomentTable) -> Result<Outcome, RunError> {
    let pipeline = RunError::Pipeline;
    info!("{}: checking", cfg.name);
    let report = evaluate(cfg, traj, table).map_err(pipeline)?;
    write_json(&dir.join(REPORT_FILE), &report).map_err(pipeline)?;
    fs::write(dir.join(REPORT_CSV), report_csv(&report)).map_err(|e| pipeline(e.into()))?;
    fs::write(dir.join(SUMMARY_FILE), summary_csv(&report)).map_err(|e| pipeline(e.into()))?;
    write_plots(&report, &dir.join(PLOT_DIR)).map_err(pipeline)?;
    for c in report.failures() {
        log::warn!("check failed: {} = {:e} (bounds {:?}..{:?})", c.name, c.value, c.lower, c.upper);
    }
    Ok(Outcome { dir, report })
}

/// Every available profile at `t = 1` on the scaling grid, plus `manifest.json`.
fn write_profiles(dir: &Path, cfg: &ExperimentConfig, table: &MomentTable) -> crate::Result<()> {
    let exp = Expansion::from_table(table, cfg.order)?;
    let grid = Grid::make(DIM, cfg.verify.scaling_grid.0, cfg.verify.scaling_grid.1)?;
    let out = dir.join(PROFILE_DIR);
    fs::create_dir_all(&out)?;
    let mut profiles = Vec::new();
    for (kind, order) in exp.available() {
        let manifest = exp.manifest(kind, order)?;
        let file = format!("{}.nsaf", manifest.name);
        save_field(&exp.profile(kind, order, 1.0, &grid)?, &out.join(&file))?;
        profiles.push(ProfileEntry { manifest, file });
    }
    write_json(&out.join("manifest.json"), &Manifest { config_hash: cfg.hash(), grid, time: 1.0, profiles })
}
