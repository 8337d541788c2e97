//! Run directory layout: `config.cfg`, `run.json`, `snapshots/*.nsaf`,
//! `history.json`, `norms.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{q_label, ExperimentConfig};
use crate::error::{Error, Result};
use crate::field_io::{load_field, save_field};
use crate::grid::Grid;
use crate::solver::{MomentHistory, Snapshot, Trajectory};

pub const CONFIG_FILE: &str = "config.cfg";
pub const RUN_FILE: &str = "run.json";
pub const HISTORY_FILE: &str = "history.json";
pub const NORMS_FILE: &str = "norms.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub name: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Stream-function amplitude actually used.
    pub amplitude: f64,
    pub grid: Grid,
    pub steps: usize,
    pub snapshot_times: Vec<f64>,
    pub snapshot_files: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct HistoryFile {
    config_hash: String,
    history: MomentHistory,
}

fn snapshot_name(i: usize) -> String {
    format!("{SNAPSHOT_DIR}/omega_{i:04}.nsaf")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })
}

/// Persists the trajectory and returns its metadata.
pub fn write_trajectory(
    dir: &Path,
    cfg: &ExperimentConfig,
    config_text: &str,
    amplitude: f64,
    traj: &Trajectory,
) -> Result<RunMeta> {
    let hash = cfg.hash();
    fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    fs::write(dir.join(CONFIG_FILE), config_text)?;
    let mut files = Vec::with_capacity(traj.snapshots.len());
    for (i, s) in traj.snapshots.iter().enumerate() {
        let name = snapshot_name(i);
        save_field(&s.omega, &dir.join(&name))?;
        files.push(name);
    }
    let meta = RunMeta {
        config_hash: hash.clone(),
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        amplitude,
        grid: traj.grid,
        steps: traj.steps,
        snapshot_times: traj.snapshots.iter().map(Snapshot::time).collect(),
        snapshot_files: files,
    };
    write_json(&dir.join(RUN_FILE), &meta)?;
    write_json(&dir.join(HISTORY_FILE), &HistoryFile { config_hash: hash.clone(), history: traj.history.clone() })?;
    fs::write(dir.join(NORMS_FILE), norms_csv(traj, &cfg.verify.q, &hash)?)?;
    Ok(meta)
}

/// `t, q, |u|_q, |w|_q` and the same over the interior of the box.
pub fn norms_csv(traj: &Trajectory, qs: &[f64], hash: &str) -> Result<String> {
    let mut out = format!("# config_hash={hash}\nt,q,u,omega,u_interior,omega_interior\n");
    for s in &traj.snapshots {
        let u = s.velocity();
        for &q in qs {
            let _ = writeln!(
                out,
                "{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e}",
                s.time(),
                q_label(q),
                u.lq_norm(q)?,
                s.omega.lq_norm(q)?,
                u.lq_norm_interior(q)?,
                s.omega.lq_norm_interior(q)?
            );
        }
    }
    Ok(out)
}

pub fn read_meta(dir: &Path) -> Result<RunMeta> {
    read_json(&dir.join(RUN_FILE))
}

/// Reloads the snapshots and moment history written by [`write_trajectory`].
pub fn load_trajectory(dir: &Path, meta: &RunMeta) -> Result<Trajectory> {
    let history: HistoryFile = read_json(&dir.join(HISTORY_FILE))?;
    if history.config_hash != meta.config_hash {
        return Err(Error::Format { path: dir.join(HISTORY_FILE), msg: "config hash does not match run.json".into() });
    }
    let mut snapshots = Vec::with_capacity(meta.snapshot_files.len());
    for name in &meta.snapshot_files {
        let path: PathBuf = dir.join(name);
        let omega = load_field(&path)?;
        if *omega.grid() != meta.grid {
            return Err(Error::Format { path, msg: "snapshot grid differs from run.json".into() });
        }
        snapshots.push(Snapshot { omega });
    }
    Ok(Trajectory { grid: meta.grid, snapshots, history: history.history, steps: meta.steps })
}
