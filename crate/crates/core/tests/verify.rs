mod common;

use std::sync::OnceLock;

use common::{synthetic_table, test_grid};
use nsasym_core::coeffs::MomentTable;
use nsasym_core::expansion::{Expansion, ProfileKind};
use nsasym_core::extract::extract_table;
use nsasym_core::solver::{
    amplitude_for_velocity, make_initial_vorticity, simulate, InitialDataSpec, SolverConfig, Trajectory,
};
use nsasym_core::verify::{
    fit_decay, mild_solution_crosscheck, multiplier_identity, perturbed_table, remainder_decay, rescaled_limit,
    scaling_report, structural_identities, vorticity_remainder_decay, Window,
};
use nsasym_core::{Error, Grid};
use proptest::prelude::*;

const WINDOW: Window = Window { t_a: 4.0, t_b: 16.0 };

fn schedule(t_end: f64) -> Vec<f64> {
    let mut t: Vec<f64> = vec![0.0];
    t.extend((0..).map(|k| 0.1 * 10f64.powf(k as f64 / 24.0)).take_while(|t| *t < t_end * (1.0 - 1e-9)));
    t.push(t_end);
    t
}

fn run(velocity: f64) -> (Trajectory, MomentTable) {
    let g = Grid::make(2, 24.0, 96).unwrap();
    let mut spec = InitialDataSpec { amplitude: 1.0, width: 1.0, center: [0.5, 0.25] };
    spec.amplitude = if velocity == 0.0 { 0.0 } else { amplitude_for_velocity(&spec, &g, velocity).unwrap() };
    let w0 = make_initial_vorticity(&spec, &g).unwrap();
    let traj = simulate(&w0, 16.0, &schedule(16.0), &SolverConfig::default()).unwrap();
    let table = extract_table("test", &w0, &traj, 2).unwrap().table;
    (traj, table)
}

fn flow() -> &'static (Trajectory, MomentTable) {
    static FLOW: OnceLock<(Trajectory, MomentTable)> = OnceLock::new();
    FLOW.get_or_init(|| run(0.1))
}

#[test]
fn remainder_exponents_increase_with_order() {
    let (traj, table) = flow();
    let e = Expansion::from_table(table, 2).unwrap();
    let a: Vec<f64> = (0..=2).map(|m| remainder_decay(traj, &e, m, false, 2.0, WINDOW).unwrap().a).collect();
    assert!((a[0] - 1.0).abs() <= 0.1, "{a:?}");
    assert!(a[1] >= 1.35, "{a:?}");
    assert!(a[2] >= 1.8, "{a:?}");
    assert!(a[0] <= a[1] + 0.1 && a[1] <= a[2] + 0.1);
}

#[test]
fn vorticity_remainder_exponents() {
    let (traj, table) = flow();
    let e = Expansion::from_table(table, 2).unwrap();
    let a: Vec<f64> =
        [0, 2, 3].iter().map(|&m| vorticity_remainder_decay(traj, &e, m, 2.0, WINDOW).unwrap().a).collect();
    assert!(a[0] >= 1.35 && a[1] >= 1.8 && a[2] >= 2.25, "{a:?}");
}

#[test]
fn short_window_is_rejected() {
    let (traj, table) = flow();
    let e = Expansion::from_table(table, 2).unwrap();
    let err = remainder_decay(traj, &e, 1, false, 2.0, Window { t_a: 15.0, t_b: 16.0 }).unwrap_err();
    assert!(matches!(err, Error::WindowTooShort(..)));
}

#[test]
fn rescaled_limit_discriminates_wrong_coefficients() {
    let (traj, table) = flow();
    let reference = Grid::make(2, 6.0, 96).unwrap();
    let e = Expansion::from_table(table, 2).unwrap();
    let good = rescaled_limit(traj, &e, 1, WINDOW, &reference).unwrap();
    assert!(good.relative_final() <= 0.15, "{}", good.relative_final());
    assert!(good.monotone);
    let bad = Expansion::from_table(&perturbed_table(table, 1, 1.1).unwrap(), 2).unwrap();
    let control = rescaled_limit(traj, &bad, 1, WINDOW, &reference).unwrap();
    assert!(control.relative_final() > good.relative_final());
    assert!(rescaled_limit(traj, &e, 3, WINDOW, &reference).is_err());
}

#[test]
fn perturbed_coefficient_degrades_the_fit() {
    let (traj, table) = flow();
    let e = Expansion::from_table(table, 2).unwrap();
    let bad = Expansion::from_table(&perturbed_table(table, 1, 1.1).unwrap(), 2).unwrap();
    let good = remainder_decay(traj, &e, 1, false, 2.0, WINDOW).unwrap();
    let worse = remainder_decay(traj, &bad, 1, false, 2.0, WINDOW).unwrap();
    assert!(worse.rms >= 2.0 * good.rms, "{} vs {}", worse.rms, good.rms);
}

#[test]
fn zero_flow_has_zero_distances() {
    let (traj, table) = run(0.0);
    let e = Expansion::from_table(&table, 2).unwrap();
    let r = rescaled_limit(&traj, &e, 1, WINDOW, &Grid::make(2, 6.0, 48).unwrap()).unwrap();
    assert!(r.distances.iter().all(|d| *d == 0.0), "{:?}", r.distances);
}

#[test]
fn mild_forms_agree_with_solver() {
    let (traj, _) = flow();
    let r = mild_solution_crosscheck(traj, 10.0).unwrap();
    assert!(r.velocity_form <= 0.02 && r.vorticity_form <= 0.02, "{r:?}");
    assert!(r.gap <= 0.01);
    assert!(matches!(mild_solution_crosscheck(traj, 3.3), Err(Error::OutOfRange(_))));
    assert!(mild_solution_crosscheck(traj, 50.0).is_err());
}

#[test]
fn mild_forms_are_exact_in_the_linear_regime() {
    let g = Grid::make(2, 16.0, 64).unwrap();
    let spec = InitialDataSpec { amplitude: 1e-6, width: 1.0, center: [0.0, 0.0] };
    let w0 = make_initial_vorticity(&spec, &g).unwrap();
    let traj = simulate(&w0, 2.0, &[0.0, 0.5, 1.0, 2.0], &SolverConfig::default()).unwrap();
    let r = mild_solution_crosscheck(&traj, 2.0).unwrap();
    assert!(r.velocity_form <= 1e-6 && r.vorticity_form <= 1e-6, "{r:?}");
}

#[test]
fn riesz_multiplier_identity() {
    assert!(multiplier_identity(&Grid::make(2, 12.0, 128).unwrap()).unwrap() <= 1e-10);
}

#[test]
fn scaling_report_tolerances() {
    let g = test_grid();
    let e = Expansion::from_table(&synthetic_table(&g), 4).unwrap();
    let report = scaling_report(&e, &g, &[1.0, 4.0, 16.0]).unwrap();
    assert_eq!(report.len(), e.available().len() * 3);
    for entry in &report {
        assert!(entry.passed, "{entry:?}");
    }
    let u1 = report.iter().filter(|r| r.profile == "U1").map(|r| r.error).fold(0.0, f64::max);
    assert!(u1 <= 1e-6);
    let tol = nsasym_core::verify::scaling_tolerance(ProfileKind::J, 3);
    assert_eq!(tol, 1e-4);
}

#[test]
fn structural_identities_hold_on_synthetic_profiles() {
    let g = test_grid();
    let e = Expansion::from_table(&synthetic_table(&g), 4).unwrap();
    let ids = structural_identities(&e, &g).unwrap();
    assert!(ids.iter().any(|i| i.name == "div K4"));
    assert!(ids.iter().any(|i| i.name == "BS Omega3 = U2"));
    for i in &ids {
        assert!(i.passed, "{i:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fits_recover_exact_power_laws(a in 0.2f64..3.0, c in 1e-4f64..1e2, b in 0u32..3) {
        let t: Vec<f64> = (0..12).map(|k| 10f64.powf(1.0 + k as f64 / 11.0)).collect();
        let v: Vec<f64> = t.iter().map(|t| c * t.powf(-a) * t.ln().powi(b as i32)).collect();
        let f = fit_decay(&t, &v, b).unwrap();
        prop_assert!((f.a - a).abs() <= 1e-9);
        prop_assert!((f.c / c - 1.0).abs() <= 1e-8);
        prop_assert!(f.rms <= 1e-10);
        prop_assert!((f.eval(30.0) / (c * 30f64.powf(-a) * 30f64.ln().powi(b as i32)) - 1.0).abs() <= 1e-8);
    }
}
