//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::{derivative_pairs, heat_fd_relative_error, synthetic_table, test_grid};
use nsasym_core::coeffs::{linear_slope, log_time_integral, renormalization, renormalized_integrand, ProfileMoments};
use nsasym_core::expansion::Expansion;
use nsasym_core::kernel::{heat_kernel_derivative, sample_nonlocal_kernel, KernelSpec};
use nsasym_core::quad::{composite, GaussLegendre};
use nsasym_core::runner::config::ExperimentConfig;
use nsasym_core::runner::report::Report;
use nsasym_core::runner::{run_config, COEFFICIENTS_FILE, REPORT_FILE};
use nsasym_core::solver::{
    amplitude_for_velocity, make_initial_vorticity, simulate, InitialDataSpec, SolverConfig, SolverState,
};
use nsasym_core::verify::{scaling_report, structural_identities};
use nsasym_core::{Field, Grid, MultiIndex};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn mi(v: &[u32]) -> MultiIndex {
    MultiIndex::new(v.to_vec())
}

fn kernel_scaling() -> Verdict {
    let mut heat: f64 = 0.0;
    for l in 0..3 {
        for beta in MultiIndex::all_up_to(2, 3) {
            let spec = KernelSpec::heat(l, beta);
            let e = spec.scaling_exponent();
            for lam in [0.5f64, 1.5, 2.0, 3.0, 4.0] {
                for x in [[0.3, -0.7], [1.5, 0.2], [-2.0, 2.5]] {
                    let base = heat_kernel_derivative(&spec, 1.0, &x).map_err(err)?;
                    let scaled = lam.powi(e)
                        * heat_kernel_derivative(&spec, lam * lam, &[lam * x[0], lam * x[1]]).map_err(err)?;
                    heat = heat.max(((scaled - base) / base.abs().max(1e-3)).abs());
                }
            }
        }
    }
    let grid = Grid::make(2, 16.0, 128).map_err(err)?;
    let specs = [
        KernelSpec::grad_inv_laplace(0, 0, mi(&[0, 0])),
        KernelSpec::grad_inv_laplace(1, 1, mi(&[1, 0])),
        KernelSpec::riesz_pair(0, 1, 0, mi(&[0, 0])),
        KernelSpec::riesz_pair(1, 1, 1, mi(&[0, 1])),
    ];
    let mut nonlocal: f64 = 0.0;
    for spec in &specs {
        let base = sample_nonlocal_kernel(spec, 1.0, &grid).map_err(err)?;
        let sup = base.max_abs(true);
        for lam in [0.5f64, 1.5, 2.0, 3.0, 4.0] {
            let f = sample_nonlocal_kernel(spec, lam * lam, &grid.dilated(lam).map_err(err)?).map_err(err)?;
            let factor = lam.powi(spec.scaling_exponent());
            for k in (0..grid.len()).filter(|&k| grid.is_interior(k)) {
                nonlocal = nonlocal.max((factor * f.values()[k] - base.values()[k]).abs() / sup);
            }
        }
    }
    ensure!(heat <= 1e-12, "heat family error {heat:.3e} > 1e-12");
    ensure!(nonlocal <= 1e-6, "nonlocal family error {nonlocal:.3e} > 1e-6");
    Ok(format!("heat {heat:.2e}, nonlocal {nonlocal:.2e}"))
}

fn hermite_vs_differences() -> Verdict {
    let mut rng = StdRng::seed_from_u64(20);
    let pairs = derivative_pairs(2, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.random_range(0.5..4.0);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        for (l, beta) in &pairs {
            worst = worst.max(heat_fd_relative_error(*l, beta, t, &x));
        }
    }
    ensure!(worst <= 1e-6, "worst relative error {worst:.3e}");
    Ok(format!("worst relative error {worst:.2e} over {} derivatives", pairs.len()))
}

fn solver_validation() -> Verdict {
    let spec = InitialDataSpec { amplitude: 1.0, width: 1.0, center: [0.5, 0.25] };

    let g = Grid::make(2, 16.0, 256).map_err(err)?;
    let w = make_initial_vorticity(&spec, &g).map_err(err)?;
    let linear = SolverConfig { advection: false, ..SolverConfig::default() };
    let next = SolverState::new(&w).map_err(err)?.step(0.5, &linear).map_err(err)?.vorticity();
    let exact = Field::from_fn(g, 0.5, |x| spec.diffused(0.5, &x[..2])).map_err(err)?;
    let diffusion = next.max_abs_diff(&exact, false).map_err(err)? / w.max_abs(false);

    let g = Grid::make(2, 12.0, 64).map_err(err)?;
    let s = spec.with_amplitude(amplitude_for_velocity(&spec, &g, 0.25).map_err(err)?);
    let w0 = make_initial_vorticity(&s, &g).map_err(err)?;
    let at = |dt: f64| -> Result<Field, String> {
        let cfg = SolverConfig { dt_max: dt, ..Default::default() };
        Ok(simulate(&w0, 2.0, &[2.0], &cfg).map_err(err)?.snapshots[0].omega.clone())
    };
    let reference = at(0.00625)?;
    let coarse = at(0.1)?.sub(&reference).map_err(err)?.lq_norm(2.0).map_err(err)?;
    let fine = at(0.05)?.sub(&reference).map_err(err)?.lq_norm(2.0).map_err(err)?;
    let ratio = coarse / fine;

    let g = Grid::make(2, 16.0, 128).map_err(err)?;
    let w0 = make_initial_vorticity(&spec, &g).map_err(err)?;
    let traj =
        simulate(&w0, 4.0, &[0.0, 1.0, 2.0, 4.0], &SolverConfig { dt_max: 0.1, ..Default::default() }).map_err(err)?;
    let area = 4.0 * 16.0 * 16.0;
    let drift =
        traj.snapshots.iter().map(|s| (s.omega.integral()[0] / area).abs() / w0.max_abs(false)).fold(0.0, f64::max);

    ensure!(diffusion <= 1e-12, "diffusion-only error {diffusion:.3e}");
    ensure!((12.0..=20.0).contains(&ratio), "convergence ratio {ratio:.3}");
    ensure!(drift <= 1e-13, "mean drift {drift:.3e}");
    Ok(format!("diffusion {diffusion:.2e}, ratio {ratio:.2}, mean drift {drift:.2e}"))
}

fn structural() -> Verdict {
    let g = test_grid();
    let e = Expansion::from_table(&synthetic_table(&g), 4).map_err(err)?;
    let ids = structural_identities(&e, &g).map_err(err)?;
    let scaling = scaling_report(&e, &g, &[1.0, 4.0, 16.0]).map_err(err)?;
    for i in &ids {
        ensure!(i.passed, "{}: {:.3e} > {:.0e}", i.name, i.error, i.tolerance);
    }
    for s in &scaling {
        ensure!(s.passed, "scaling {} t={}: {:.3e} > {:.0e}", s.profile, s.t, s.error, s.tolerance);
    }
    let worst = ids.iter().map(|i| i.error / i.tolerance).chain(scaling.iter().map(|s| s.error / s.tolerance));
    Ok(format!(
        "{} identities, {} scaling entries, worst error/tolerance {:.2e}",
        ids.len(),
        scaling.len(),
        worst.fold(0.0, f64::max)
    ))
}

fn log_time_closed_form() -> Verdict {
    let ts: Vec<f64> = (0..60).map(|k| 10f64.powf(-2.0 + 5.0 * k as f64 / 59.0)).collect();
    let xs: Vec<f64> = ts.iter().map(|t| 1.0 / (1.0 + t)).collect();
    let mut poly: f64 = 0.0;
    for l in 0..=3u32 {
        let ys: Vec<f64> = ts
            .iter()
            .map(|&t| log_time_integral(l, t).map(|v| v - t.ln_1p()))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let picks: Vec<usize> = (0..=l as usize).map(|i| i * 59 / (l as usize).max(1)).collect();
        let interp = |x: f64| -> f64 {
            picks
                .iter()
                .map(|&i| picks.iter().filter(|&&k| k != i).fold(ys[i], |w, &k| w * (x - xs[k]) / (xs[i] - xs[k])))
                .sum()
        };
        poly = poly.max(xs.iter().zip(&ys).map(|(&x, &y)| (interp(x) - y).abs()).fold(0.0, f64::max));
    }
    let rule = GaussLegendre::cached(32);
    let mut quad: f64 = 0.0;
    for l in 0..=3u32 {
        for t in [0.01, 0.5, 4.0, 100.0, 1e4] {
            let a = log_time_integral(l, t).map_err(err)?;
            let b = composite(&rule, 0.0, t.ln_1p(), 16, |u| (1.0 - (-u).exp()).powi(l as i32));
            quad = quad.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    ensure!(poly <= 1e-10, "polynomial residual {poly:.3e}");
    ensure!(quad <= 1e-10, "quadrature disagreement {quad:.3e}");
    Ok(format!("polynomial residual {poly:.2e}, quadrature {quad:.2e}"))
}

/// Slope of the renormalized integrand near `s = 0` for a moment history made
/// of exactly the subtracted profile terms.
fn head_slope() -> Result<f64, String> {
    let (m5, m6) = (0.7, -1.3);
    let beta = mi(&[3, 1]);
    let mut moments = ProfileMoments::new();
    moments.insert((5, beta.clone(), 1), m5);
    moments.insert((6, beta.clone(), 1), m6);
    let subs = renormalization(0, &beta, 1, 2, &moments).map_err(err)?;
    let s: Vec<f64> = (0..20).map(|k| 1e-3 * 100f64.powf(k as f64 / 19.0)).collect();
    let x: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = s
        .iter()
        .map(|&v| renormalized_integrand(0, 4, &subs, v, m5 * (1.0 + v).powf(-0.5) + m6 / (1.0 + v)).abs().ln())
        .collect();
    Ok(linear_slope(&x, &y).0)
}

fn golden_config() -> Result<(ExperimentConfig, String), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/golden_n2.cfg");
    let text = std::fs::read_to_string(&path).map_err(err)?;
    let cfg = ExperimentConfig::load(&path).map_err(err)?;
    Ok((cfg, text))
}

fn golden_run(out: PathBuf) -> Result<Report, String> {
    let (mut cfg, text) = golden_config()?;
    cfg.output = out;
    Ok(run_config(&cfg, &text).map_err(err)?.report)
}

fn value(report: &Report, name: &str) -> Result<f64, String> {
    report.check(name).map(|c| c.value).ok_or_else(|| format!("report has no check {name:?}"))
}

fn decay_rates(r: &Report) -> Verdict {
    let (cfg, _) = golden_config()?;
    ensure!(
        cfg.verify.window.t_a == 10.0 && cfg.verify.window.t_b == 100.0 && cfg.verify.q.contains(&2.0),
        "golden config must use window [10, 100] and q = 2"
    );
    let s0 = -value(r, "u slope q=2")?;
    let s1 = -value(r, "u-U1 slope q=2")?;
    let s2 = -value(r, "u-U1-U2 slope q=2")?;
    ensure!((s0 + 1.0).abs() <= 0.1, "|u| slope {s0:.4}");
    ensure!(s1 <= -1.35, "|u-U1| slope {s1:.4}");
    ensure!(s2 <= -1.8, "|u-U1-U2| slope {s2:.4}");
    Ok(format!("slopes {s0:.4}, {s1:.4}, {s2:.4}"))
}

fn vorticity_rate(r: &Report) -> Verdict {
    let s = -value(r, "omega-Omega2-Omega3 slope q=2")?;
    ensure!(s <= -2.25, "slope {s:.4}");
    Ok(format!("slope {s:.4}"))
}

fn integrand_behaviour(head: f64, r: &Report) -> Verdict {
    let tail = value(r, "renormalized tail slope")?;
    ensure!((-0.7..=-0.3).contains(&head), "head slope {head:.4}");
    ensure!(tail <= -1.35, "tail slope {tail:.4}");
    let resolved = r.tails.iter().filter(|t| t.resolved).count();
    Ok(format!("head slope {head:.4}, tail slope {tail:.4} over {resolved} resolved constants"))
}

fn rescaled_uniqueness(r: &Report) -> Verdict {
    let d = value(r, "rescaled U1 distance")?;
    let margin = value(r, "rescaled U1 control margin")?;
    ensure!(d <= 0.15, "distance {d:.4}");
    ensure!(margin > 0.0, "control margin {margin:.4}");
    Ok(format!("distance {d:.4}, control {:.4}", d + margin))
}

fn mild_equivalence(r: &Report) -> Verdict {
    let u = value(r, "mild velocity residual")?;
    let w = value(r, "mild vorticity residual")?;
    let gap = value(r, "mild residual gap")?;
    let mult = value(r, "multiplier identity")?;
    ensure!(u <= 0.02 && w <= 0.02, "residuals {u:.3e}, {w:.3e}");
    ensure!(gap <= 0.01, "gap {gap:.3e}");
    ensure!(mult <= 1e-10, "multiplier identity {mult:.3e}");
    Ok(format!("residuals {u:.2e}, {w:.2e}, gap {gap:.2e}, multiplier {mult:.2e}"))
}

fn determinism(a: &Path, b: &Path) -> Verdict {
    for name in [COEFFICIENTS_FILE, REPORT_FILE] {
        let x = std::fs::read(a.join(name)).map_err(err)?;
        let y = std::fs::read(b.join(name)).map_err(err)?;
        ensure!(x == y, "{name} differs between repeated runs");
    }
    Ok(format!("{COEFFICIENTS_FILE} and {REPORT_FILE} identical"))
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn record(&mut self, id: u32, title: &str, started: Instant, verdict: Verdict) {
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {id:>2} {title}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                self.failed += 1;
                println!("FAIL {id:>2} {title}: {detail} ({secs:.1} s)");
            }
        }
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut suite = Suite { failed: 0 };
    let mut timed = |id: u32, title: &str, f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        suite.record(id, title, t, f());
    };
    timed(1, "kernel scaling", &kernel_scaling);
    timed(2, "Hermite vs finite differences", &hermite_vs_differences);
    timed(3, "solver validation", &solver_validation);
    timed(6, "structural identities", &structural);
    timed(7, "log-time closed form", &log_time_closed_form);

    let head = head_slope();
    let scratch = tempfile::tempdir().expect("temporary directory");
    let (first, second) = (scratch.path().join("first"), scratch.path().join("second"));
    let t = Instant::now();
    let golden = golden_run(first.clone());
    let run_secs = t.elapsed().as_secs_f64();
    println!("golden run finished in {run_secs:.1} s");
    let with = |f: &dyn Fn(&Report) -> Verdict| golden.as_ref().map_err(|e| format!("golden run: {e}")).and_then(f);
    let t = Instant::now();
    suite.record(4, "velocity decay rates", t, with(&decay_rates));
    suite.record(5, "vorticity expansion rate", t, with(&vorticity_rate));
    suite.record(8, "renormalized integrand", t, head.and_then(|h| with(&|r| integrand_behaviour(h, r))));
    suite.record(9, "rescaled-limit uniqueness", t, with(&rescaled_uniqueness));
    suite.record(10, "mild-solution equivalence", t, with(&mild_equivalence));

    let t = Instant::now();
    let repeat = golden_run(second.clone()).and_then(|_| determinism(&first, &second));
    suite.record(11, "determinism", t, repeat);

    println!("{} of 11 criteria failed", suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
