//! Checks of a simulated flow against its expansion: decay-rate fits of
//! remainders, the rescaled limit, the two mild-solution representations and
//! the parabolic scaling of every profile.

use serde::{Deserialize, Serialize};

use crate::coeffs::{linear_slope, MomentTable};
use crate::error::{Error, Result};
use crate::expansion::{Expansion, ProfileKind, DIM};
use crate::field::Field;
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::multi_index::MultiIndex;
use crate::par;
use crate::solver::{biot_savart, curl, Snapshot, Trajectory};
use crate::spectral::{self, C64};

/// Fewest snapshots a decay fit accepts.
pub const MIN_FIT_SAMPLES: usize = 6;

/// `|f(t)| ~ c t^{-a} (log t)^b` fitted in log-log coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t_a: f64,
    pub t_b: f64,
    pub a: f64,
    pub b: u32,
    pub c: f64,
    pub rms: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.c * t.powf(-self.a) * t.ln().powi(self.b as i32)
    }
}

/// Fit window `[t_a, t_b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_a: f64,
    pub t_b: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self { t_a: 10.0, t_b: 100.0 }
    }
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_a * (1.0 - 1e-12) && t <= self.t_b * (1.0 + 1e-12)
    }
}

/// Least-squares fit with the log power `b` held fixed.
pub fn fit_decay(times: &[f64], values: &[f64], b: u32) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} times, {} values", times.len(), values.len())));
    }
    if times.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooShort(times.len(), MIN_FIT_SAMPLES));
    }
    if times.iter().any(|t| !(*t > 1.0)) || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("decay fits need t > 1 and positive values".into()));
    }
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = times.iter().zip(values).map(|(t, v)| v.ln() - b as f64 * t.ln().ln()).collect();
    let (slope, intercept) = linear_slope(&x, &y);
    let rms =
        (x.iter().zip(&y).map(|(xi, yi)| (yi - slope * xi - intercept).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    Ok(DecayFit {
        t_a: times[0],
        t_b: times[times.len() - 1],
        a: -slope,
        b,
        c: intercept.exp(),
        rms,
        samples: times.len(),
    })
}

/// Fits for `b = 0, 1, 2`; the second value is the index of the smallest residual.
pub fn fit_all(times: &[f64], values: &[f64]) -> Result<(Vec<DecayFit>, usize)> {
    let fits = (0..=2).map(|b| fit_decay(times, values, b)).collect::<Result<Vec<_>>>()?;
    let best = (0..fits.len()).min_by(|&i, &j| fits[i].rms.total_cmp(&fits[j].rms)).expect("three fits");
    Ok((fits, best))
}

/// `L^q` norms of `f(snapshot)` over the snapshots inside `window`.
pub fn norm_series<F>(trajectory: &Trajectory, window: Window, q: f64, f: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&Snapshot) -> Result<Field>,
{
    let mut times = Vec::new();
    let mut norms = Vec::new();
    for s in trajectory.snapshots.iter().filter(|s| window.contains(s.time())) {
        times.push(s.time());
        norms.push(f(s)?.lq_norm(q)?);
    }
    Ok((times, norms))
}

/// `u(t) - expansion_sum(t, order, with_logs)` at one snapshot.
pub fn velocity_remainder(s: &Snapshot, expansion: &Expansion, order: u32, with_logs: bool) -> Result<Field> {
    let u = s.velocity();
    if order == 0 {
        return Ok(u);
    }
    u.sub(&expansion.expansion_sum(s.time(), order, with_logs, u.grid())?)
}

/// `omega(t) - sum_{m=2}^{upto} Omega_m(t)` at one snapshot.
pub fn vorticity_remainder(s: &Snapshot, expansion: &Expansion, upto: u32) -> Result<Field> {
    if upto < 2 {
        return Ok(s.omega.clone());
    }
    s.omega.sub(&expansion.omega_sum_profile(s.time(), upto, s.omega.grid())?)
}

/// Decay fit (`b = 0`) of `|u - sum_{m <= order} U_m|_q` over the window.
pub fn remainder_decay(
    trajectory: &Trajectory,
    expansion: &Expansion,
    order: u32,
    with_logs: bool,
    q: f64,
    window: Window,
) -> Result<DecayFit> {
    let (t, v) = norm_series(trajectory, window, q, |s| velocity_remainder(s, expansion, order, with_logs))?;
    fit_decay(&t, &v, 0)
}

/// Decay fit (`b = 0`) of `|omega - sum_{m=2}^{upto} Omega_m|_q`.
pub fn vorticity_remainder_decay(
    trajectory: &Trajectory,
    expansion: &Expansion,
    upto: u32,
    q: f64,
    window: Window,
) -> Result<DecayFit> {
    let (t, v) = norm_series(trajectory, window, q, |s| vorticity_remainder(s, expansion, upto))?;
    fit_decay(&t, &v, 0)
}

/// `L^2` distances between `t^{(n+m)/2} (u - sum_{k<m} U_k)(t, sqrt(t) xi)`
/// and `U_m(1, xi)` on a reference grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledReport {
    pub m: u32,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// `|U_m(1)|_2` on the reference grid.
    pub reference_norm: f64,
    /// Distances over the last four snapshots never grow by more than 10%.
    pub monotone: bool,
    pub truncated: bool,
}

impl RescaledReport {
    pub fn final_distance(&self) -> f64 {
        self.distances.last().copied().unwrap_or(0.0)
    }

    pub fn relative_final(&self) -> f64 {
        if self.reference_norm > 0.0 {
            self.final_distance() / self.reference_norm
        } else {
            0.0
        }
    }
}

/// The rescaled remainder minus `U_m(1)` equals the rescaling of
/// `u - sum_{k <= m} U_k` because `U_m` is self-similar.
pub fn rescaled_limit(
    trajectory: &Trajectory,
    expansion: &Expansion,
    m: u32,
    window: Window,
    reference: &Grid,
) -> Result<RescaledReport> {
    if !(1..=DIM as u32).contains(&m) {
        return Err(Error::InvalidArgument(format!("rescaled limit is checked for 1 <= m <= {DIM}")));
    }
    let mut times = Vec::new();
    let mut distances = Vec::new();
    let mut reference_norm = 0.0;
    let mut truncated = false;
    for s in trajectory.snapshots.iter().filter(|s| window.contains(s.time())) {
        let t = s.time();
        let r = velocity_remainder(s, expansion, m, false)?.rescale(m as i32, reference)?;
        let um = expansion.u_profile(m, t, &trajectory.grid)?.rescale(m as i32, reference)?;
        truncated |= r.truncated || um.truncated;
        times.push(t);
        distances.push(r.field.lq_norm(2.0)?);
        reference_norm = um.field.lq_norm(2.0)?;
    }
    if times.is_empty() {
        return Err(Error::WindowTooShort(0, 1));
    }
    let tail = &distances[distances.len().saturating_sub(4)..];
    let monotone = tail.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    Ok(RescaledReport { m, times, distances, reference_norm, monotone, truncated })
}

/// Copy of `table` with every initial moment of order `m + 1` scaled by `factor`.
pub fn perturbed_table(table: &MomentTable, m: u32, factor: f64) -> Result<MomentTable> {
    let mut out = table.clone();
    for alpha in MultiIndex::all_of_order(DIM, m + 1) {
        let v = out
            .initial_moments
            .get_mut(&alpha.key())
            .ok_or_else(|| Error::MissingCoefficient(format!("initial moment {alpha}")))?;
        *v *= factor;
    }
    Ok(out)
}

/// Relative residuals of the velocity and vorticity mild-solution formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MildResidual {
    pub t: f64,
    /// `|u - G u0 + int G P I|_2 / |u|_2`.
    pub velocity_form: f64,
    /// Same with `u` recovered from `G w0 - int G (d_1 I^2 - d_2 I^1)`.
    pub vorticity_form: f64,
    /// `|velocity_form - vorticity_form|`.
    pub gap: f64,
    pub snapshots: usize,
}

/// Weights of `int_0^1 e^{-x (1-tau)} (1-tau) dtau` and `... tau dtau`.
fn exp_trapezoid_weights(x: f64) -> (f64, f64) {
    if x < 1e-3 {
        let a = 0.5 - x / 3.0 + x * x / 8.0;
        let b = 0.5 - x / 6.0 + x * x / 24.0;
        return (a, b);
    }
    let e = (-x).exp();
    let a = (1.0 - e * (1.0 + x)) / (x * x);
    (a, (1.0 - e) / x - a)
}

/// Both Duhamel representations of `u(t)` from the stored snapshots, with
/// `I` linear in time between snapshots and the heat factor integrated exactly.
pub fn mild_solution_crosscheck(trajectory: &Trajectory, t: f64) -> Result<MildResidual> {
    let grid = trajectory.grid;
    let target = trajectory.snapshot_at(t).ok_or(Error::OutOfRange(t))?;
    let used: Vec<&Snapshot> = trajectory.snapshots.iter().filter(|s| s.time() <= target.time()).collect();
    let first = used.first().ok_or(Error::OutOfRange(t))?;
    if first.time() != 0.0 || used.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "mild-solution check needs snapshots from t = 0 up to t = {t}, found {}",
            used.len()
        )));
    }
    let tab = spectral::table(&grid);
    let len = grid.len();
    let spectrum = |s: &Snapshot| {
        let i = s.nonlinearity();
        let (a, b) = spectral::fft_real_pair(&grid, i.component(0), i.component(1));
        [a, b]
    };
    let u0 = first.velocity();
    let (u0a, u0b) = spectral::fft_real_pair(&grid, u0.component(0), u0.component(1));
    let w0 = spectral::fft_real(&grid, first.omega.values());
    let zero = C64::new(0.0, 0.0);
    let mut duhamel = [vec![zero; len], vec![zero; len]];
    let mut prev = spectrum(first);
    let mut prev_t = first.time();
    for s in &used[1..] {
        let next = spectrum(s);
        let h = s.time() - prev_t;
        let lag = t - s.time();
        for (c, acc) in duhamel.iter_mut().enumerate() {
            let (pa, pb) = (&prev[c], &next[c]);
            par::for_each_mut(acc, |k, v| {
                let r2 = tab.r2[k];
                let (wa, wb) = exp_trapezoid_weights(r2 * h);
                *v += (pa[k] * wa + pb[k] * wb) * (h * (-lag * r2).exp());
            });
        }
        prev = next;
        prev_t = s.time();
    }
    let i = C64::new(0.0, 1.0);
    let build = |velocity: bool| -> Vec<[C64; 2]> {
        par::map_range(len, |k| {
            let (xi, r2) = (tab.xi[k], tab.r2[k]);
            if tab.nyquist[k] || r2 == 0.0 {
                return [zero, zero];
            }
            let heat = (-t * r2).exp();
            let d = [duhamel[0][k], duhamel[1][k]];
            if velocity {
                let dot = (xi[0] * d[0] + xi[1] * d[1]) / r2;
                [u0a[k] * heat - (d[0] - dot * xi[0]), u0b[k] * heat - (d[1] - dot * xi[1])]
            } else {
                let w = w0[k] * heat - (i * xi[0] * d[1] - i * xi[1] * d[0]);
                [i * xi[1] * w / r2, -i * xi[0] * w / r2]
            }
        })
    };
    let u = target.velocity();
    let norm = u.lq_norm(2.0)?;
    let residual = |spec: Vec<[C64; 2]>| -> Result<f64> {
        let (a, b): (Vec<C64>, Vec<C64>) = spec.into_iter().map(|[a, b]| (a, b)).unzip();
        let (ra, rb) = spectral::ifft_real_pair(&grid, &a, &b);
        let rhs = Field::vector(grid, vec![ra, rb], t)?;
        let diff = u.sub(&rhs)?.lq_norm(2.0)?;
        Ok(if norm > 0.0 { diff / norm } else { diff })
    };
    let velocity_form = residual(build(true))?;
    let vorticity_form = residual(build(false))?;
    Ok(MildResidual {
        t,
        velocity_form,
        vorticity_form,
        gap: (velocity_form - vorticity_form).abs(),
        snapshots: used.len(),
    })
}

/// `max |sum_k R^j R^k d_k f + d_j f| / max |d_j f|` over `j` for a Gaussian `f`.
pub fn multiplier_identity(grid: &Grid) -> Result<f64> {
    let n = grid.dim();
    let width = grid.half_extent() / 8.0;
    let f = Field::from_fn(*grid, 0.0, |x| (-x[..n].iter().map(|v| v * v).sum::<f64>() / (width * width)).exp())?;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let unit_j = MultiIndex::unit(n, j);
        let grad = KernelSpec::heat(0, unit_j.clone());
        let pairs: Vec<KernelSpec> = (0..n).map(|k| KernelSpec::riesz_pair(j, k, 0, MultiIndex::unit(n, k))).collect();
        let lhs = spectral::apply_multiplier(grid, f.values(), |xi| {
            pairs.iter().map(|p| p.static_symbol(xi)).sum::<C64>() + grad.static_symbol(xi)
        });
        let dj = spectral::apply_multiplier(grid, f.values(), |xi| grad.static_symbol(xi));
        let scale = dj.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = lhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

/// One row of [`scaling_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingEntry {
    pub profile: String,
    pub t: f64,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Default tolerance of the rescaling test: exact kernel sums versus profiles
/// containing the `J_m` quadrature.
pub fn scaling_tolerance(kind: ProfileKind, order: u32) -> f64 {
    let has_j = kind == ProfileKind::J || (kind == ProfileKind::U && order > DIM as u32);
    if has_j {
        1e-4
    } else {
        1e-6
    }
}

/// Compares `t^{(n+m)/2} P(t, sqrt(t) xi)` with `P(1, xi)` on the interior of
/// `base`, evaluating `P(t)` on `base` dilated by `sqrt(t)`.
pub fn scaling_report(expansion: &Expansion, base: &Grid, times: &[f64]) -> Result<Vec<ScalingEntry>> {
    let mut out = Vec::new();
    for (kind, order) in expansion.available() {
        let reference = expansion.profile(kind, order, 1.0, base)?;
        let scale = reference.max_abs(true);
        let tolerance = scaling_tolerance(kind, order);
        for &t in times {
            let g = base.dilated(t.sqrt())?;
            let f = expansion.profile(kind, order, t, &g)?;
            let r = f.rescale(order as i32, base)?;
            let diff = r.field.max_abs_diff(&reference, true)?;
            let error = if scale > 0.0 { diff / scale } else { diff };
            out.push(ScalingEntry {
                profile: format!("{}{order}", kind.name()),
                t,
                error,
                tolerance,
                passed: error <= tolerance,
            });
        }
    }
    Ok(out)
}

/// One structural identity evaluated on constructed profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityEntry {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityEntry {
    fn new(name: String, error: f64, tolerance: f64) -> Self {
        Self { name, error, tolerance, passed: error <= tolerance }
    }
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Divergence of every velocity-like profile, the Biot-Savart laws between
/// `U_m` and `Omega_{m+1}` for `m <= n`, vanishing low moments of `Omega_m`
/// and zero mean of `I_p(1)`, all at `t = 1` on `grid`.
pub fn structural_identities(expansion: &Expansion, grid: &Grid) -> Result<Vec<IdentityEntry>> {
    let mut out = Vec::new();
    for (kind, m) in expansion.available() {
        if !matches!(kind, ProfileKind::U | ProfileKind::K) {
            continue;
        }
        let u = expansion.profile(kind, m, 1.0, grid)?;
        let scale = u.partial(0).max_abs(false).max(u.partial(1).max_abs(false));
        let div = u.divergence()?.max_abs(false);
        out.push(IdentityEntry::new(format!("div {}{m}", kind.name()), relative(div, scale), 1e-8));
    }
    for m in 1..=(DIM as u32).min(expansion.max_order) {
        let u = expansion.u_profile(m, 1.0, grid)?;
        let w = expansion.omega_profile(m + 1, 1.0, grid)?;
        let forward = curl(&u)?.max_abs_diff(&w, true)?;
        out.push(IdentityEntry::new(format!("curl U{m} = Omega{}", m + 1), relative(forward, w.max_abs(true)), 1e-6));
        let back = biot_savart(&w)?.max_abs_diff(&u, true)?;
        out.push(IdentityEntry::new(format!("BS Omega{} = U{m}", m + 1), relative(back, u.max_abs(true)), 1e-6));
    }
    let listed = expansion.available();
    for m in listed.iter().filter(|(k, _)| *k == ProfileKind::Omega).map(|(_, m)| *m) {
        let w = expansion.omega_profile(m, 1.0, grid)?;
        let scale = w.lq_norm(1.0)?;
        let worst = MultiIndex::all_up_to(DIM, 1)
            .iter()
            .map(|a| w.moment(a).map(|v| v[0].abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(IdentityEntry::new(format!("moments Omega{m}"), relative(worst, scale), 1e-8));
    }
    for p in listed.iter().filter(|(k, _)| *k == ProfileKind::Ip).map(|(_, p)| *p) {
        let ip = expansion.i_p_profile(p, 1.0, grid)?;
        let scale = ip.lq_norm(1.0)?;
        let worst = ip.integral().into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
        out.push(IdentityEntry::new(format!("mean I{p}"), relative(worst, scale), 1e-8));
    }
    Ok(out)
}
