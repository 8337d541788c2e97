//! Pseudo-spectral solver for the two-dimensional vorticity equation
//! `d_t w + div(u w) = Delta w` on a periodic box, with Biot-Savart velocity
//! recovery and the nonlinearity `I = w (-u^2, u^1)`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Rank};
use crate::grid::Grid;
use crate::multi_index::{binomial, MultiIndex};
use crate::par;
use crate::spectral::{self, RealFft2, C64};

/// Stream-Hessian initial data `w0 = d_1 d_2 phi`, `phi = A exp(-|x - c|^2 / sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub amplitude: f64,
    pub width: f64,
    pub center: [f64; 2],
}

impl InitialDataSpec {
    /// Exact heat evolution `G(t) * w0` at `x`.
    pub fn diffused(&self, t: f64, x: &[f64]) -> f64 {
        let s2 = self.width * self.width + 4.0 * t;
        let a = self.amplitude * self.width * self.width / s2;
        let y1 = x[0] - self.center[0];
        let y2 = x[1] - self.center[1];
        a * 4.0 * y1 * y2 / (s2 * s2) * (-(y1 * y1 + y2 * y2) / s2).exp()
    }

    /// Stream function `phi` at `x`.
    pub fn stream(&self, x: &[f64]) -> f64 {
        let y1 = x[0] - self.center[0];
        let y2 = x[1] - self.center[1];
        self.amplitude * (-(y1 * y1 + y2 * y2) / (self.width * self.width)).exp()
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self { amplitude, ..self.clone() }
    }
}

fn require_2d(grid: &Grid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid(format!("the solver is two-dimensional, got n = {}", grid.dim())));
    }
    Ok(())
}

/// Samples `w0` and checks that it is localized inside the box.
pub fn make_initial_vorticity(spec: &InitialDataSpec, grid: &Grid) -> Result<Field> {
    require_2d(grid)?;
    if !(spec.width > 0.0) || !spec.amplitude.is_finite() {
        return Err(Error::InvalidArgument(format!("bad initial data {spec:?}")));
    }
    let omega = Field::from_fn(*grid, 0.0, |x| spec.diffused(0.0, &x[..2]))?;
    let n = grid.points();
    let edge = par::max_range(grid.len(), |k| {
        let idx = grid.unravel(k);
        if idx[0] == 0 || idx[1] == 0 || idx[0] == n - 1 || idx[1] == n - 1 {
            omega.values()[k].abs()
        } else {
            0.0
        }
    });
    let relative = edge / spec.amplitude.abs();
    if relative >= 1e-14 {
        return Err(Error::NotLocalized(relative));
    }
    Ok(omega)
}

/// Amplitude giving `|u0|_inf = target` for the shape of `spec`.
pub fn amplitude_for_velocity(spec: &InitialDataSpec, grid: &Grid, target: f64) -> Result<f64> {
    let unit = make_initial_vorticity(&spec.with_amplitude(1.0), grid)?;
    let u = biot_savart(&unit)?;
    Ok(target / u.lq_norm(f64::INFINITY)?)
}

fn velocity_from_spectrum(grid: &Grid, omega_hat: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let tab = spectral::table(grid);
    let (a, b): (Vec<C64>, Vec<C64>) = par::map_range(grid.len(), |k| {
        let r2 = tab.r2[k];
        if tab.nyquist[k] || r2 == 0.0 {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let xi = &tab.xi[k];
        let w = omega_hat[k] / r2;
        (C64::new(-w.im * xi[1], w.re * xi[1]), C64::new(w.im * xi[0], -w.re * xi[0]))
    })
    .into_iter()
    .unzip();
    spectral::ifft_real_pair(grid, &a, &b)
}

/// Velocity `u = (i xi_2, -i xi_1) |xi|^{-2} w^` of a mean-zero vorticity.
pub fn biot_savart(omega: &Field) -> Result<Field> {
    let grid = *omega.grid();
    require_2d(&grid)?;
    if omega.rank() != Rank::Scalar {
        return Err(Error::ShapeMismatch("Biot-Savart needs a scalar vorticity".into()));
    }
    let mass = omega.integral()[0];
    let l1 = omega.lq_norm(1.0)?;
    if mass.abs() > 1e-8 * l1 {
        return Err(Error::NonZeroMean(mass));
    }
    let hat = spectral::fft_real(&grid, omega.values());
    let (u1, u2) = velocity_from_spectrum(&grid, &hat);
    Field::vector(grid, vec![u1, u2], omega.time())
}

/// Highest power in the multipole expansion of the periodic-image velocity.
const IMAGE_ORDER: usize = 15;

/// `Gamma(1/4)`.
const GAMMA_QUARTER: f64 = 3.625_609_908_221_908;

/// Square-lattice sums `sum_{c != 0} c^{-k}` over `c = m + i n`, for
/// `k = 4, 8, 12, 16` (the only nonzero ones with `k <= 16`).
fn lattice_sums() -> &'static [(usize, f64)] {
    static SUMS: OnceLock<Vec<(usize, f64)>> = OnceLock::new();
    SUMS.get_or_init(|| {
        let g4 = GAMMA_QUARTER.powi(8) / (960.0 * std::f64::consts::PI.powi(2));
        let mut out = vec![(4, g4)];
        for k in [8, 12, 16] {
            let r = 64i64;
            let mut sum = C64::new(0.0, 0.0);
            for m in -r..=r {
                for n in -r..=r {
                    if m != 0 || n != 0 {
                        sum += C64::new(m as f64, n as f64).powi(-(k as i32));
                    }
                }
            }
            out.push((k, sum.re));
        }
        out
    })
}

/// Velocity induced on the box by all periodic images of `w`, from the
/// complex moments of `w`; `u - image` is the whole-plane Biot-Savart velocity
/// of `w` restricted to the box.
pub fn image_velocity(grid: &Grid, omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.points();
    let period = 2.0 * grid.half_extent();
    let xs: Vec<f64> = (0..n).map(|i| grid.node(i)).collect();
    // mu_j = int w(y) (y_1 + i y_2)^j dy, accumulated per row
    let rows = par::map_range(n, |i| {
        let mut acc = [C64::new(0.0, 0.0); IMAGE_ORDER + 1];
        for (jj, &y2) in xs.iter().enumerate() {
            let w = omega[i * n + jj];
            if w == 0.0 {
                continue;
            }
            let y = C64::new(xs[i], y2);
            let mut p = C64::new(w, 0.0);
            for a in acc.iter_mut() {
                *a += p;
                p *= y;
            }
        }
        acc
    });
    let mut mu = [C64::new(0.0, 0.0); IMAGE_ORDER + 1];
    for r in &rows {
        for (m, v) in mu.iter_mut().zip(r) {
            *m += v;
        }
    }
    let vol = grid.cell_volume();
    for m in mu.iter_mut() {
        *m *= vol;
    }
    // V = u^2 + i u^1 = -(1/2pi) sum_k G_{k+1} int w(y) (x - y)^k dy = sum_m a_m x^m
    let mut a = [C64::new(0.0, 0.0); IMAGE_ORDER + 1];
    for &(kk, g) in lattice_sums() {
        let k = kk - 1;
        let gk = g * period.powi(-(kk as i32)) / (2.0 * std::f64::consts::PI);
        for (m, am) in a.iter_mut().enumerate().take(k + 1) {
            let j = k - m;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            *am -= mu[j] * (gk * binomial(k as u32, j as u32) * sign);
        }
    }
    let v: Vec<C64> = par::map_range(grid.len(), |q| {
        let x = C64::new(xs[q / n], xs[q % n]);
        a.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * x + c)
    });
    (v.iter().map(|z| z.im).collect(), v.iter().map(|z| z.re).collect())
}

/// Whole-plane Biot-Savart velocity of a vorticity contained in the box.
pub fn free_space_velocity(omega: &Field) -> Result<Field> {
    let u = biot_savart(omega)?;
    let (i1, i2) = image_velocity(omega.grid(), omega.values());
    u.sub(&Field::vector(*omega.grid(), vec![i1, i2], omega.time())?)
}

/// Scalar curl `d_1 u^2 - d_2 u^1`.
pub fn curl(u: &Field) -> Result<Field> {
    require_2d(u.grid())?;
    if u.rank() != Rank::Vector {
        return Err(Error::ShapeMismatch("curl needs a vector field".into()));
    }
    let c1 = u.component_field(1).partial(0);
    let c2 = u.component_field(0).partial(1);
    c1.sub(&c2)
}

/// `I = (-w u^2, w u^1)`.
pub fn nonlinearity_i(u: &Field, omega: &Field) -> Result<Field> {
    if u.grid() != omega.grid() || u.rank() != Rank::Vector || omega.rank() != Rank::Scalar {
        return Err(Error::ShapeMismatch("nonlinearity needs a vector u and scalar w on one grid".into()));
    }
    require_2d(u.grid())?;
    let w = omega.values();
    let (u1, u2) = (u.component(0), u.component(1));
    let i1 = par::map_range(w.len(), |k| -w[k] * u2[k]);
    let i2 = par::map_range(w.len(), |k| w[k] * u1[k]);
    Field::vector(*u.grid(), vec![i1, i2], omega.time())
}

/// Exact heat evolution of any field over time `tau` (spectrally).
pub fn heat_evolve(f: &Field, tau: f64) -> Field {
    let grid = *f.grid();
    let values = (0..f.n_components())
        .flat_map(|c| {
            spectral::apply_multiplier(&grid, f.component(c), |xi| {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                C64::new((-tau * r2).exp(), 0.0)
            })
        })
        .collect();
    Field::new(grid, f.rank(), values, f.time() + tau).expect("heat evolution keeps values finite")
}

/// Time-stepping options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest step taken.
    pub dt_max: f64,
    /// Safety factor applied to the advective bound `h / (2 max|u|)`.
    pub cfl_safety: f64,
    /// Disables the nonlinear term (pure heat flow).
    pub advection: bool,
    /// Highest order `|beta|` of the dense moment history of `I`.
    pub history_order: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { dt_max: 0.05, cfl_safety: 0.5, advection: true, history_order: 5 }
    }
}

fn transform_for(grid: &Grid) -> Arc<RealFft2> {
    type Key = (u64, usize);
    static CACHE: OnceLock<RwLock<HashMap<Key, Arc<RealFft2>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (grid.half_extent().to_bits(), grid.points());
    if let Some(t) = cache.read().expect("transform cache poisoned").get(&key) {
        return t.clone();
    }
    let t = Arc::new(RealFft2::new(grid));
    cache.write().expect("transform cache poisoned").entry(key).or_insert(t).clone()
}

/// Integrating factors `exp(-tau |xi|^2)` for `tau = dt/2, dt`.
#[derive(Debug)]
struct Factors {
    dt: f64,
    half: Vec<f64>,
    full: Vec<f64>,
}

/// Vorticity as a half spectrum at time `t`.
#[derive(Clone)]
pub struct SolverState {
    grid: Grid,
    fft: Arc<RealFft2>,
    omega_hat: Vec<C64>,
    time: f64,
    factors: Option<Arc<Factors>>,
}

impl std::fmt::Debug for SolverState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolverState").field("grid", &self.grid).field("time", &self.time).finish_non_exhaustive()
    }
}

/// Real-space fields of one right-hand-side evaluation.
struct Stage {
    rhs: Vec<C64>,
    omega: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
}

impl SolverState {
    pub fn new(omega: &Field) -> Result<Self> {
        require_2d(omega.grid())?;
        let grid = *omega.grid();
        let fft = transform_for(&grid);
        let mut omega_hat = fft.forward(omega.values());
        omega_hat[0] = C64::new(0.0, 0.0);
        Ok(Self { grid, fft, omega_hat, time: omega.time(), factors: None })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn vorticity(&self) -> Field {
        Field::scalar(self.grid, self.fft.inverse(&self.omega_hat), self.time).expect("state stays finite")
    }

    /// `-div(u w)` in spectral form, dealiased; also returns the real-space fields.
    fn nonlinear(&self, hat: &[C64], advection: bool) -> Stage {
        let f = &self.fft;
        let velocity = |c: usize| {
            let spec = par::map_range(f.len(), |q| {
                let r2 = f.r2[q];
                if f.nyquist[q] || r2 == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let w = hat[q] * (f.xi[q][1 - c] / r2);
                if c == 0 {
                    C64::new(-w.im, w.re)
                } else {
                    C64::new(w.im, -w.re)
                }
            });
            f.inverse(&spec)
        };
        let omega = f.inverse(hat);
        let (u1, u2) = (velocity(0), velocity(1));
        if !advection {
            return Stage { rhs: vec![C64::new(0.0, 0.0); f.len()], omega, u1, u2 };
        }
        let f1 = f.forward(&par::map_range(omega.len(), |k| u1[k] * omega[k]));
        let f2 = f.forward(&par::map_range(omega.len(), |k| u2[k] * omega[k]));
        let cut = (self.grid.points() / 3) as u32;
        let rhs = par::map_range(f.len(), |q| {
            if f.max_freq[q] > cut || f.nyquist[q] {
                return C64::new(0.0, 0.0);
            }
            let xi = &f.xi[q];
            let d = f1[q] * xi[0] + f2[q] * xi[1];
            C64::new(d.im, -d.re)
        });
        Stage { rhs, omega, u1, u2 }
    }

    fn factors(&self, dt: f64) -> Arc<Factors> {
        if let Some(f) = &self.factors {
            if f.dt == dt {
                return f.clone();
            }
        }
        let r2 = &self.fft.r2;
        Arc::new(Factors {
            dt,
            half: par::map_range(r2.len(), |k| (-0.5 * dt * r2[k]).exp()),
            full: par::map_range(r2.len(), |k| (-dt * r2[k]).exp()),
        })
    }

    fn advective_bound(&self, stage: &Stage, cfg: &SolverConfig) -> f64 {
        let umax = par::max_range(stage.u1.len(), |k| stage.u1[k].hypot(stage.u2[k]));
        if umax == 0.0 {
            f64::INFINITY
        } else {
            cfg.cfl_safety * self.grid.spacing() / (2.0 * umax)
        }
    }

    fn advance(&self, dt: f64, cfg: &SolverConfig, k1: Stage) -> Result<SolverState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
        }
        let bound = self.advective_bound(&k1, cfg);
        if cfg.advection && dt > bound {
            return Err(Error::CflViolation { dt, bound });
        }
        let len = self.fft.len();
        let factors = self.factors(dt);
        let (e_half, e_full) = (&factors.half, &factors.full);
        let w = &self.omega_hat;
        let a = &k1.rhs;
        let s2: Vec<C64> = par::map_range(len, |k| (w[k] + a[k] * (0.5 * dt)) * e_half[k]);
        let b = self.nonlinear(&s2, cfg.advection).rhs;
        let s3: Vec<C64> = par::map_range(len, |k| w[k] * e_half[k] + b[k] * (0.5 * dt));
        let c = self.nonlinear(&s3, cfg.advection).rhs;
        let s4: Vec<C64> = par::map_range(len, |k| w[k] * e_full[k] + c[k] * (dt * e_half[k]));
        let d = self.nonlinear(&s4, cfg.advection).rhs;
        let mut next: Vec<C64> = par::map_range(len, |k| {
            w[k] * e_full[k] + (a[k] * e_full[k] + (b[k] + c[k]) * (2.0 * e_half[k]) + d[k]) * (dt / 6.0)
        });
        next[0] = C64::new(0.0, 0.0);
        let t = self.time + dt;
        if next.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite(t));
        }
        let factors = Some(factors.clone());
        Ok(SolverState { grid: self.grid, fft: self.fft.clone(), omega_hat: next, time: t, factors })
    }

    /// One integrating-factor RK4 step.
    pub fn step(&self, dt: f64, cfg: &SolverConfig) -> Result<SolverState> {
        let k1 = self.nonlinear(&self.omega_hat, cfg.advection);
        self.advance(dt, cfg, k1)
    }
}

/// Spatial moments `int y^beta I^j(t, y) dy` recorded at every step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MomentHistory {
    pub orders: Vec<MultiIndex>,
    pub times: Vec<f64>,
    /// `values[step][2 * b + j]` for `orders[b]`, component `j`.
    pub values: Vec<Vec<f64>>,
}

impl MomentHistory {
    pub fn new(max_order: u32) -> Self {
        Self { orders: MultiIndex::all_up_to(2, max_order), times: Vec::new(), values: Vec::new() }
    }

    pub fn index_of(&self, beta: &MultiIndex) -> Option<usize> {
        self.orders.iter().position(|b| b == beta)
    }

    /// Time series of `int y^beta I^j dy`.
    pub fn series(&self, beta: &MultiIndex, j: usize) -> Option<Vec<f64>> {
        let b = self.index_of(beta)?;
        Some(self.values.iter().map(|row| row[2 * b + j]).collect())
    }

    fn record(&mut self, grid: &Grid, t: f64, omega: &[f64], u1: &[f64], u2: &[f64]) {
        let (g1, g2) = image_velocity(grid, omega);
        let u1: Vec<f64> = u1.iter().zip(&g1).map(|(a, b)| a - b).collect();
        let u2: Vec<f64> = u2.iter().zip(&g2).map(|(a, b)| a - b).collect();
        let max_order = self.orders.iter().map(|b| b.order()).max().unwrap_or(0) as usize;
        let n = grid.points();
        let xs: Vec<f64> = (0..n).map(|i| grid.node(i)).collect();
        // per row x_1 = xs[i]: sum_y2 y2^b I^j
        let rows = par::map_range(n, |i| {
            let mut acc = vec![0.0; 2 * (max_order + 1)];
            for (jj, &y2) in xs.iter().enumerate() {
                let k = i * n + jj;
                let i1 = -omega[k] * u2[k];
                let i2 = omega[k] * u1[k];
                let mut p = 1.0;
                for b in 0..=max_order {
                    acc[2 * b] += p * i1;
                    acc[2 * b + 1] += p * i2;
                    p *= y2;
                }
            }
            acc
        });
        let vol = grid.cell_volume();
        let row: Vec<f64> = self
            .orders
            .iter()
            .flat_map(|beta| {
                let (a, b) = (beta.get(0) as i32, beta.get(1) as usize);
                let mut s = [0.0; 2];
                for (i, acc) in rows.iter().enumerate() {
                    let w = xs[i].powi(a);
                    s[0] += w * acc[2 * b];
                    s[1] += w * acc[2 * b + 1];
                }
                [s[0] * vol, s[1] * vol]
            })
            .collect();
        self.times.push(t);
        self.values.push(row);
    }
}

/// Stored solution time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub omega: Field,
}

impl Snapshot {
    pub fn time(&self) -> f64 {
        self.omega.time()
    }

    pub fn velocity(&self) -> Field {
        biot_savart_unchecked(&self.omega)
    }

    pub fn nonlinearity(&self) -> Field {
        nonlinearity_i(&self.velocity(), &self.omega).expect("snapshot fields share a grid")
    }
}

fn biot_savart_unchecked(omega: &Field) -> Field {
    let grid = *omega.grid();
    let hat = spectral::fft_real(&grid, omega.values());
    let (u1, u2) = velocity_from_spectrum(&grid, &hat);
    Field::vector(grid, vec![u1, u2], omega.time()).expect("velocity is finite")
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub snapshots: Vec<Snapshot>,
    pub history: MomentHistory,
    pub steps: usize,
}

impl Trajectory {
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.time() - t).abs() <= 1e-9 * t.max(1.0))
    }
}

/// Integrates from `omega0` to `t_end`, storing snapshots at the requested
/// times (sorted, within `[t0, t_end]`) and the per-step moment history of `I`.
pub fn simulate(omega0: &Field, t_end: f64, snapshot_times: &[f64], cfg: &SolverConfig) -> Result<Trajectory> {
    let grid = *omega0.grid();
    require_2d(&grid)?;
    let limit = grid.half_extent() / 6.0;
    if t_end.sqrt() > limit {
        return Err(Error::Containment { sqrt_t: t_end.sqrt(), limit });
    }
    if !(cfg.dt_max > 0.0) {
        return Err(Error::InvalidArgument("dt_max must be positive".into()));
    }
    let t0 = omega0.time();
    let mut targets: Vec<f64> = snapshot_times.to_vec();
    if targets.windows(2).any(|w| w[0] >= w[1]) || targets.iter().any(|&t| t < t0 || t > t_end) {
        return Err(Error::InvalidArgument("snapshot times must increase within [t0, t_end]".into()));
    }
    targets.reverse();
    let mut state = SolverState::new(omega0)?;
    let mut history = MomentHistory::new(cfg.history_order);
    let mut snapshots = Vec::new();
    let mut steps = 0usize;
    let tol = 1e-12 * t_end.max(1.0);
    loop {
        let t = state.time;
        let k1 = state.nonlinear(&state.omega_hat, cfg.advection);
        history.record(&grid, t, &k1.omega, &k1.u1, &k1.u2);
        while targets.last().is_some_and(|&s| (s - t).abs() <= tol) {
            targets.pop();
            let omega = Field::scalar(grid, k1.omega.clone(), t)?;
            snapshots.push(Snapshot { omega });
        }
        if t >= t_end - tol {
            break;
        }
        let mut dt = cfg.dt_max.min(t_end - t);
        if let Some(&next) = targets.last() {
            dt = dt.min(next - t);
        }
        state = state.advance(dt, cfg, k1)?;
        if (t_end - state.time).abs() <= tol {
            state.time = t_end;
        }
        if let Some(&next) = targets.last() {
            if (next - state.time).abs() <= tol {
                state.time = next;
            }
        }
        steps += 1;
        if steps.is_multiple_of(200) {
            log::info!("t = {:.4}, {steps} steps", state.time);
        }
    }
    Ok(Trajectory { grid, snapshots, history, steps })
}
