//! Checks of one run against its expansion and the files that record them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{q_label, ExperimentConfig};
use super::plot::{loglog, Series};
use crate::coeffs::{linear_slope, renormalization, renormalized_series, CoeffKind, MomentTable};
use crate::error::{Error, Result};
use crate::expansion::{Expansion, DIM};
use crate::field::Field;
use crate::grid::Grid;
use crate::par;
use crate::solver::Trajectory;
use crate::verify::{
    fit_all, mild_solution_crosscheck, multiplier_identity, perturbed_table, rescaled_limit, scaling_report,
    structural_identities, DecayFit, IdentityEntry, MildResidual, RescaledReport, ScalingEntry, Window,
};

/// Upper bound on the tail slope of the renormalized integrands.
pub const TAIL_SLOPE_BOUND: f64 = -1.35;

/// One pass/fail line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Reported only when false; never fails the run.
    pub asserted: bool,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>, asserted: bool) -> Self {
        let passed = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self { name: name.into(), value, lower, upper, asserted, passed }
    }

    fn at_least(name: impl Into<String>, value: f64, lower: f64) -> Self {
        Self::new(name, value, Some(lower), None, true)
    }

    fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        Self::new(name, value, None, Some(upper), true)
    }

    fn reported(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, None, None, false)
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Some(1.0), None, true)
    }

    pub fn failed(&self) -> bool {
        self.asserted && !self.passed
    }
}

/// Norms of one remainder over the fit window with its three fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    /// `u` or `omega`.
    pub quantity: String,
    /// Subtracted profiles, e.g. `U1+U2`.
    pub subtracted: String,
    pub order: u32,
    pub q: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Fits with `b = 0, 1, 2`.
    pub fits: Vec<DecayFit>,
    pub best_b: u32,
}

impl DecaySeries {
    /// Exponent of the fit without logarithm.
    pub fn exponent(&self) -> f64 {
        self.fits[0].a
    }
}

/// Late-time slope of one renormalized integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub key: String,
    pub slope: f64,
    pub samples: usize,
    /// Largest `|integrand|` inside the window.
    pub magnitude: f64,
    /// The constant exceeds its error bar by [`RESOLVED_RATIO`] and the largest
    /// constant of the table by [`ZERO_FLOOR`]; slopes of unresolved
    /// (symmetry-zero) integrands are rounding noise.
    pub resolved: bool,
}

/// Signal-to-error ratio above which a renormalized constant counts as resolved.
pub const RESOLVED_RATIO: f64 = 10.0;

/// Constants below this fraction of the largest renormalized constant are zero.
pub const ZERO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub name: String,
    pub order: u32,
    pub window: Window,
    pub decay: Vec<DecaySeries>,
    pub rescaled: Vec<RescaledReport>,
    /// Rescaled limit of `U_1` built from perturbed moments.
    pub rescaled_control: RescaledReport,
    pub mild: Option<MildResidual>,
    pub multiplier_identity: f64,
    pub scaling: Vec<ScalingEntry>,
    pub identities: Vec<IdentityEntry>,
    pub tails: Vec<TailEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.failed()).collect()
    }
}

/// `gamma_q = (n/2)(1 - 1/q)`.
pub fn gamma(q: f64) -> f64 {
    DIM as f64 / 2.0 * (1.0 - 1.0 / q)
}

fn u_label(m: u32) -> String {
    if m == 0 {
        "none".into()
    } else {
        (1..=m).map(|k| format!("U{k}")).collect::<Vec<_>>().join("+")
    }
}

fn omega_label(m: u32) -> String {
    if m < 2 {
        "none".into()
    } else {
        (2..=m).map(|k| format!("Omega{k}")).collect::<Vec<_>>().join("+")
    }
}

fn series(
    quantity: &str,
    subtracted: String,
    order: u32,
    q: f64,
    times: Vec<f64>,
    values: Vec<f64>,
) -> Result<DecaySeries> {
    let (fits, best) = fit_all(&times, &values)?;
    Ok(DecaySeries {
        quantity: quantity.into(),
        subtracted,
        order,
        q: q_label(q),
        times,
        values,
        fits,
        best_b: best as u32,
    })
}

/// Norms of `u - sum_{m <= M} U_m` (with `K_m log t` if requested) for
/// `M = 0..=order` and of `omega - sum_{m=2}^{M} Omega_m` for `M = 1..=3`,
/// at every snapshot in the window; index `[snapshot][M][q]`.
#[allow(clippy::type_complexity)]
fn remainder_norms(
    traj: &Trajectory,
    exp: &Expansion,
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>)> {
    let window = cfg.verify.window;
    let snaps: Vec<_> = traj.snapshots.iter().filter(|s| window.contains(s.time())).collect();
    let times: Vec<f64> = snaps.iter().map(|s| s.time()).collect();
    let grid = traj.grid;
    let norms = |f: &Field| cfg.verify.q.iter().map(|&q| f.lq_norm(q)).collect::<Result<Vec<f64>>>();
    let rows = par::map_vec(snaps, |s| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let t = s.time();
        let mut u = s.velocity();
        let mut un = vec![norms(&u)?];
        for m in 1..=cfg.order {
            u = u.sub(&exp.u_profile(m, t, &grid)?)?;
            if cfg.with_logs && m > DIM as u32 {
                u = u.axpy(-t.ln(), &exp.k_profile(m, t, &grid)?)?;
            }
            un.push(norms(&u)?);
        }
        let mut w = s.omega.clone();
        let mut wn = vec![norms(&w)?];
        for m in 2..=DIM as u32 + 1 {
            w = w.sub(&exp.omega_profile(m, t, &grid)?)?;
            wn.push(norms(&w)?);
        }
        Ok((un, wn))
    });
    let mut u_rows = Vec::new();
    let mut w_rows = Vec::new();
    for r in rows {
        let (a, b) = r?;
        u_rows.push(a);
        w_rows.push(b);
    }
    Ok((times, u_rows, w_rows))
}

/// Slope of `log |r(s)|` against `log s` over the window for every
/// renormalized constant in the table.
fn tail_slopes(traj: &Trajectory, table: &MomentTable, window: Window) -> Result<Vec<TailEntry>> {
    let moments = table.profile_moments()?;
    let jobs: Vec<_> = table.sorted().into_iter().filter(|c| c.kind == CoeffKind::Renormalized).cloned().collect();
    let floor = ZERO_FLOOR * jobs.iter().map(|c| c.value.abs()).fold(0.0, f64::max);
    par::map_vec(jobs, |c| {
        let subs = renormalization(c.l, &c.beta, c.component, DIM, &moments)?;
        let (s, r) = renormalized_series(&traj.history, c.l, &c.beta, c.component, &subs)?;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        let mut magnitude = 0.0f64;
        for (si, ri) in s.iter().zip(&r) {
            if window.contains(*si) && *ri != 0.0 {
                x.push(si.ln());
                y.push(ri.abs().ln());
                magnitude = magnitude.max(ri.abs());
            }
        }
        if x.len() < 2 {
            return Err(Error::WindowTooShort(x.len(), 2));
        }
        Ok(TailEntry {
            key: c.key(),
            slope: linear_slope(&x, &y).0,
            samples: x.len(),
            magnitude,
            resolved: c.value.abs() > RESOLVED_RATIO * c.error && c.value.abs() > floor,
        })
    })
    .into_iter()
    .collect()
}

/// Runs every check of `cfg` on a trajectory and its coefficient table.
pub fn evaluate(cfg: &ExperimentConfig, traj: &Trajectory, table: &MomentTable) -> Result<Report> {
    let exp = Expansion::from_table(table, cfg.order)?;
    let window = cfg.verify.window;
    let mut checks = Vec::new();
    let mut decay = Vec::new();

    let (times, u_rows, w_rows) = remainder_norms(traj, &exp, cfg)?;
    for (qi, &q) in cfg.verify.q.iter().enumerate() {
        let g = gamma(q);
        let ql = q_label(q);
        let mut a = Vec::new();
        for m in 0..=cfg.order {
            let v: Vec<f64> = u_rows.iter().map(|r| r[m as usize][qi]).collect();
            let s = series("u", u_label(m), m, q, times.clone(), v)?;
            let name = format!("u-{} slope q={ql}", u_label(m).replace('+', "-")).replace("u-none", "u");
            let exponent = s.exponent();
            checks.push(match m {
                0 => Check::new(name, exponent, Some(g + 0.4), Some(g + 0.6), true),
                1 => Check::at_least(name, exponent, g + 1.0 - 0.15),
                2 => Check::at_least(name, exponent, g + 1.5 - 0.2),
                _ => Check::reported(name, exponent),
            });
            a.push(exponent);
            decay.push(s);
        }
        let steps = a.windows(2).take(DIM).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        checks.push(Check::at_least(format!("u exponents monotone q={ql}"), steps, -0.1));
        let bounds = [g + 1.0 - 0.15, g + 1.5 - 0.2, g + 2.0 - 0.25];
        for (k, bound) in bounds.iter().enumerate() {
            let m = if k == 0 { 0 } else { k as u32 + 1 };
            let v: Vec<f64> = w_rows.iter().map(|r| r[k][qi]).collect();
            let s = series("omega", omega_label(m), m, q, times.clone(), v)?;
            let name =
                format!("omega-{} slope q={ql}", omega_label(m).replace('+', "-")).replace("omega-none", "omega");
            checks.push(Check::at_least(name, s.exponent(), *bound));
            decay.push(s);
        }
    }

    let reference = Grid::make(DIM, cfg.verify.rescaled_grid.0, cfg.verify.rescaled_grid.1)?;
    let mut rescaled = Vec::new();
    for m in 1..=cfg.order.min(DIM as u32) {
        rescaled.push(rescaled_limit(traj, &exp, m, window, &reference)?);
    }
    let perturbed = perturbed_table(table, 1, 1.0 + cfg.verify.perturbation)?;
    let control_exp = Expansion::from_table(&perturbed, 1)?;
    let control = rescaled_limit(traj, &control_exp, 1, window, &reference)?;
    let r1 = &rescaled[0];
    checks.push(Check::at_most("rescaled U1 distance", r1.relative_final(), 0.15));
    checks.push(Check::flag("rescaled U1 monotone", r1.monotone));
    checks.push(Check::at_least(
        "rescaled U1 control margin",
        control.relative_final() - r1.relative_final(),
        f64::MIN_POSITIVE,
    ));
    for r in &rescaled[1..] {
        checks.push(Check::reported(format!("rescaled U{} distance", r.m), r.relative_final()));
    }

    let mild = match traj.snapshots.first() {
        Some(s) if s.time() == 0.0 => {
            let r = mild_solution_crosscheck(traj, cfg.verify.mild_time)?;
            checks.push(Check::at_most("mild velocity residual", r.velocity_form, 0.02));
            checks.push(Check::at_most("mild vorticity residual", r.vorticity_form, 0.02));
            checks.push(Check::at_most("mild residual gap", r.gap, 0.01));
            Some(r)
        }
        _ => None,
    };

    let small = Grid::make(DIM, cfg.verify.scaling_grid.0, cfg.verify.scaling_grid.1)?;
    let multiplier = multiplier_identity(&small)?;
    checks.push(Check::at_most("multiplier identity", multiplier, 1e-10));
    let scaling = scaling_report(&exp, &small, &cfg.verify.scaling_times)?;
    for e in &scaling {
        checks.push(Check::at_most(format!("scaling {} t={}", e.profile, e.t), e.error, e.tolerance));
    }
    let identities = structural_identities(&exp, &small)?;
    for e in &identities {
        checks.push(Check::at_most(e.name.clone(), e.error, e.tolerance));
    }

    let tails = if cfg.order > DIM as u32 { tail_slopes(traj, table, window)? } else { Vec::new() };
    if let Some(worst) = tails.iter().filter(|t| t.resolved).map(|t| t.slope).reduce(f64::max) {
        checks.push(Check::at_most("renormalized tail slope", worst, TAIL_SLOPE_BOUND));
    }
    for c in table.sorted().into_iter().filter(|c| c.kind == CoeffKind::LogCoeff) {
        checks.push(Check::reported(c.key(), c.value));
    }

    if let Some(path) = &cfg.golden {
        checks.extend(golden_checks(&checks, path)?);
    }
    let passed = checks.iter().all(|c| !c.failed());
    Ok(Report {
        config_hash: cfg.hash(),
        name: cfg.name.clone(),
        order: cfg.order,
        window,
        decay,
        rescaled,
        rescaled_control: control,
        mild,
        multiplier_identity: multiplier,
        scaling,
        identities,
        tails,
        checks,
        passed,
    })
}

/// Parses a `metric,value,tolerance` table.
pub fn read_golden(path: &Path) -> Result<BTreeMap<String, (f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1) {
        let mut parts = line.rsplitn(3, ',');
        let (tol, value, name) = (parts.next(), parts.next(), parts.next());
        let parsed = match (name, value.and_then(|v| v.parse().ok()), tol.and_then(|v| v.parse().ok())) {
            (Some(n), Some(v), Some(t)) => (n.trim_matches('"').to_string(), (v, t)),
            _ => return Err(Error::Config(format!("{}: bad line {line:?}", path.display()))),
        };
        out.insert(parsed.0, parsed.1);
    }
    Ok(out)
}

fn golden_checks(checks: &[Check], path: &Path) -> Result<Vec<Check>> {
    let golden = read_golden(path)?;
    Ok(golden
        .iter()
        .map(|(name, (value, tol))| {
            let diff = checks.iter().find(|c| &c.name == name).map_or(f64::MAX, |c| (c.value - value).abs());
            Check::at_most(format!("golden {name}"), diff, *tol)
        })
        .collect())
}

fn csv_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6e}"))
}

/// One row per check.
pub fn summary_csv(report: &Report) -> String {
    let mut out = format!("# config_hash={}\ncheck,value,lower,upper,asserted,passed\n", report.config_hash);
    for c in &report.checks {
        let _ = writeln!(
            out,
            "\"{}\",{:.10e},{},{},{},{}",
            c.name,
            c.value,
            csv_opt(c.lower),
            csv_opt(c.upper),
            c.asserted,
            c.passed
        );
    }
    out
}

/// One row per decay fit.
pub fn report_csv(report: &Report) -> String {
    let mut out =
        format!("# config_hash={}\nquantity,subtracted,q,b,a,c,rms,samples,t_a,t_b,best\n", report.config_hash);
    for s in &report.decay {
        for f in &s.fits {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.8},{:.8e},{:.4e},{},{},{},{}",
                s.quantity,
                s.subtracted,
                s.q,
                f.b,
                f.a,
                f.c,
                f.rms,
                f.samples,
                f.t_a,
                f.t_b,
                f.b == s.best_b
            );
        }
    }
    out
}

/// Log-log plots of every decay series with its `b = 0` fit, and of the
/// rescaled-limit distances.
pub fn write_plots(report: &Report, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let stamp = format!("config_hash={}", report.config_hash);
    let mut written = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<Series>> = BTreeMap::new();
    for s in &report.decay {
        let f = &s.fits[0];
        groups.entry((s.quantity.clone(), s.q.clone())).or_default().push(Series {
            label: format!("{} (a={:.3})", s.subtracted, f.a),
            points: s.times.iter().copied().zip(s.values.iter().copied()).collect(),
            fit: Some((f.c, f.a, f.b)),
        });
    }
    for ((quantity, q), series) in &groups {
        let name = format!("decay_{quantity}_q{q}.svg");
        let title = format!("remainders of {quantity}, L^{q} norm");
        fs::write(dir.join(&name), loglog(&title, "t", "norm", series, &stamp))?;
        written.push(name);
    }
    let mut series: Vec<Series> = report
        .rescaled
        .iter()
        .map(|r| Series {
            label: format!("U{}", r.m),
            points: r.times.iter().copied().zip(r.distances.iter().map(|d| d / r.reference_norm)).collect(),
            fit: None,
        })
        .collect();
    let c = &report.rescaled_control;
    series.push(Series {
        label: "U1 perturbed".into(),
        points: c.times.iter().copied().zip(c.distances.iter().map(|d| d / c.reference_norm)).collect(),
        fit: None,
    });
    fs::write(dir.join("rescaled.svg"), loglog("rescaled limit", "t", "relative distance", &series, &stamp))?;
    written.push("rescaled.svg".into());
    Ok(written)
}
