//! `key = value` experiment configuration with `[section]` headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expansion::MAX_ORDER;
use crate::solver::{InitialDataSpec, SolverConfig};
use crate::verify::Window;

/// How the initial amplitude is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeRule {
    /// Stream-function amplitude `A` as given.
    Amplitude(f64),
    /// `A` chosen so that `max |u0| = v`.
    Velocity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub half_extent: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub width: f64,
    pub center: [f64; 2],
    pub amplitude: AmplitudeRule,
}

/// Geometric snapshot times `t_first * 10^{k / per_decade}` up to `t_end`,
/// optionally preceded by `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotConfig {
    pub t_first: f64,
    pub per_decade: u32,
    pub include_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    #[serde(with = "exponents")]
    pub q: Vec<f64>,
    pub window: Window,
    /// Reference grid `(half extent, points)` of the rescaled-limit check.
    pub rescaled_grid: (f64, usize),
    /// Base grid of the profile scaling report.
    pub scaling_grid: (f64, usize),
    pub scaling_times: Vec<f64>,
    pub mild_time: f64,
    /// Relative size of injected coefficient errors.
    pub perturbation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub t_end: f64,
    pub solver: SolverConfig,
    pub snapshots: SnapshotConfig,
    pub order: u32,
    pub with_logs: bool,
    pub verify: VerifyConfig,
    pub output: PathBuf,
    /// Committed summary the run is compared against, if any.
    pub golden: Option<PathBuf>,
    pub seed: u64,
}

/// Lebesgue exponents as JSON numbers, with `"inf"` for infinity.
mod exponents {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Q {
        Finite(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(q: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Q> = q.iter().map(|&x| if x.is_finite() { Q::Finite(x) } else { Q::Named("inf".into()) }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Q>::deserialize(d)?
            .into_iter()
            .map(|q| match q {
                Q::Finite(x) => Ok(x),
                Q::Named(s) if s == "inf" => Ok(f64::INFINITY),
                Q::Named(s) => Err(serde::de::Error::custom(format!("bad exponent {s:?}"))),
            })
            .collect()
    }
}

/// Label used in file names and reports: `2`, `inf`.
pub fn q_label(q: f64) -> String {
    if q.is_finite() {
        format!("{q}")
    } else {
        "inf".into()
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out = Sections::new();
    let mut current = String::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", no + 1)))?;
            current = name.trim().to_string();
            if out.contains_key(&current) {
                return Err(Error::Config(format!("line {}: duplicate section [{current}]", no + 1)));
            }
            out.insert(current.clone(), BTreeMap::new());
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
        let section = out.entry(current.clone()).or_default();
        if section.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {}", no + 1, k.trim())));
        }
    }
    Ok(out)
}

struct Reader {
    sections: Sections,
}

impl Reader {
    fn raw(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section).and_then(|s| s.remove(key))
    }

    fn get<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(section, key) {
            Some(v) => v.parse().map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {v:?}"))),
            None => default.ok_or_else(|| Error::Config(format!("[{section}] {key} is required"))),
        }
    }

    fn list(&mut self, section: &str, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>> {
        match self.raw(section, key) {
            Some(v) => v
                .split(',')
                .map(|s| parse_real(s.trim()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Config(format!("[{section}] {key}: cannot parse list {v:?}"))),
            None => default.ok_or_else(|| Error::Config(format!("[{section}] {key} is required"))),
        }
    }

    fn pair(&mut self, section: &str, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
        let v = self.list(section, key, Some(vec![default.0, default.1]))?;
        match v[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::Config(format!("[{section}] {key}: expected two values"))),
        }
    }

    fn leftovers(&self) -> Vec<String> {
        self.sections.iter().flat_map(|(s, keys)| keys.keys().map(move |k| format!("[{s}] {k}"))).collect()
    }
}

fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

impl ExperimentConfig {
    /// Parses and validates; relative output directories resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut r = Reader { sections: parse_sections(text)? };
        let name = r.get("run", "name", Some("run".to_string()))?;
        let seed = r.get("run", "seed", Some(0u64))?;
        let grid =
            GridConfig { half_extent: r.get("grid", "half_extent", None)?, points: r.get("grid", "points", None)? };

        let width = r.get("initial", "width", Some(1.0))?;
        let center = r.pair("initial", "center", (0.0, 0.0))?;
        let amplitude = match (r.raw("initial", "amplitude"), r.raw("initial", "velocity")) {
            (Some(_), Some(_)) => return Err(Error::Config("[initial] give either amplitude or velocity".into())),
            (Some(a), None) => AmplitudeRule::Amplitude(
                a.parse().map_err(|_| Error::Config(format!("[initial] amplitude: cannot parse {a:?}")))?,
            ),
            (None, Some(v)) => AmplitudeRule::Velocity(
                v.parse().map_err(|_| Error::Config(format!("[initial] velocity: cannot parse {v:?}")))?,
            ),
            (None, None) => AmplitudeRule::Velocity(0.1),
        };

        let defaults = SolverConfig::default();
        let t_end = r.get("time", "t_end", None)?;
        let solver = SolverConfig {
            dt_max: r.get("time", "dt_max", Some(defaults.dt_max))?,
            cfl_safety: r.get("time", "cfl_safety", Some(defaults.cfl_safety))?,
            advection: r.get("time", "advection", Some(true))?,
            history_order: r.get("time", "history_order", Some(defaults.history_order))?,
        };
        let snapshots = SnapshotConfig {
            t_first: r.get("snapshots", "t_first", Some(0.1))?,
            per_decade: r.get("snapshots", "per_decade", Some(12))?,
            include_zero: r.get("snapshots", "include_zero", Some(true))?,
        };
        let order = r.get("expansion", "order", Some(2u32))?;
        let with_logs = r.get("expansion", "with_logs", Some(false))?;

        let window = r.pair("verify", "window", (10.0, 100.0))?;
        let rescaled = r.pair("verify", "rescaled_grid", (6.0, 96.0))?;
        let scaling = r.pair("verify", "scaling_grid", (12.0, 128.0))?;
        let verify = VerifyConfig {
            q: r.list("verify", "q", Some(vec![2.0]))?,
            window: Window { t_a: window.0, t_b: window.1 },
            rescaled_grid: (rescaled.0, to_points(rescaled.1, "rescaled_grid")?),
            scaling_grid: (scaling.0, to_points(scaling.1, "scaling_grid")?),
            scaling_times: r.list("verify", "scaling_times", Some(vec![1.0, 4.0, 16.0]))?,
            mild_time: r.get("verify", "mild_time", Some(f64::min(10.0, t_end)))?,
            perturbation: r.get("verify", "perturbation", Some(0.1))?,
        };
        let out: String = r.get("output", "dir", Some(format!("runs/{name}")))?;
        let resolve = |p: String| if Path::new(&p).is_absolute() { PathBuf::from(p) } else { base.join(p) };
        let output = resolve(out);
        let golden = r.raw("output", "golden").map(resolve);

        let left = r.leftovers();
        if !left.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", left.join(", "))));
        }
        let cfg = ExperimentConfig {
            name,
            grid,
            initial: InitialConfig { width, center: [center.0, center.1], amplitude },
            t_end,
            solver,
            snapshots,
            order,
            with_logs,
            verify,
            output,
            golden,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.grid.half_extent > 0.0) || self.grid.points < 8 || !self.grid.points.is_multiple_of(2) {
            return bad(format!("bad grid {:?}", self.grid));
        }
        if !(self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        let limit = self.grid.half_extent / 6.0;
        if self.t_end.sqrt() > limit {
            return bad(format!(
                "containment violated: sqrt(t_end) = {:.3} > L/6 = {limit:.3}; enlarge the box or shorten the run",
                self.t_end.sqrt()
            ));
        }
        if !(1..=MAX_ORDER).contains(&self.order) {
            return bad(format!("[expansion] order must be in 1..={MAX_ORDER}"));
        }
        if !(self.snapshots.t_first > 0.0) || self.snapshots.per_decade == 0 {
            return bad("[snapshots] need t_first > 0 and per_decade >= 1".into());
        }
        if self.verify.q.iter().any(|q| !(*q >= 1.0)) {
            return bad("[verify] q must be >= 1".into());
        }
        if !(self.verify.window.t_a > 1.0 && self.verify.window.t_a < self.verify.window.t_b) {
            return bad("[verify] window must satisfy 1 < t_a < t_b".into());
        }
        if !(self.verify.mild_time > 0.0 && self.verify.mild_time <= self.t_end) {
            return bad("[verify] mild_time must lie in (0, t_end]".into());
        }
        if !(self.solver.dt_max > 0.0 && self.solver.cfl_safety > 0.0) {
            return bad("[time] dt_max and cfl_safety must be positive".into());
        }
        let (AmplitudeRule::Velocity(v) | AmplitudeRule::Amplitude(v)) = self.initial.amplitude;
        if !v.is_finite() {
            return bad("[initial] amplitude must be finite".into());
        }
        Ok(())
    }

    /// Snapshot schedule, always containing `mild_time` and ending at `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        if self.snapshots.include_zero {
            times.push(0.0);
        }
        let mut k = 0;
        loop {
            let t = self.snapshots.t_first * 10f64.powf(k as f64 / self.snapshots.per_decade as f64);
            if t > self.t_end * (1.0 - 1e-9) {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(self.t_end);
        let m = self.verify.mild_time;
        if !times.iter().any(|t| (t - m).abs() <= 1e-9 * m) {
            let at = times.partition_point(|t| *t < m);
            times.insert(at, m);
        }
        times
    }

    pub fn initial_spec(&self, amplitude: f64) -> InitialDataSpec {
        InitialDataSpec { amplitude, width: self.initial.width, center: self.initial.center }
    }

    /// SHA-256 of the canonical JSON form (output paths excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        canonical.golden = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn to_points(v: f64, key: &str) -> Result<usize> {
    if v >= 8.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("[verify] {key}: point count must be an integer >= 8")))
    }
}
