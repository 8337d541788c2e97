#![allow(dead_code)]

use nsasym_core::kernel::{heat_kernel, heat_kernel_derivative, KernelSpec};
use nsasym_core::multi_index::{binomial, MultiIndex};

/// Tensor-product central difference of `f(t, x)` with time step `dt` and space step `dx`.
fn central(f: &dyn Fn(f64, &[f64]) -> f64, t: f64, x: &[f64], l: u32, beta: &MultiIndex, dt: f64, dx: f64) -> f64 {
    let n = x.len();
    let mut orders = vec![l];
    orders.extend(beta.entries().iter().copied());
    let steps: Vec<f64> = std::iter::once(dt).chain(std::iter::repeat_n(dx, n)).collect();
    let mut idx = vec![0u32; n + 1];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        let mut tt = t;
        let mut xx = x.to_vec();
        for a in 0..=n {
            let k = orders[a];
            let i = idx[a];
            w *= if i.is_multiple_of(2) { 1.0 } else { -1.0 } * binomial(k, i) / steps[a].powi(k as i32);
            let shift = (k as f64 / 2.0 - i as f64) * steps[a];
            if a == 0 {
                tt += shift;
            } else {
                xx[a - 1] += shift;
            }
        }
        total += w * f(tt, &xx);
        let mut a = 0;
        loop {
            if a > n {
                return total;
            }
            idx[a] += 1;
            if idx[a] <= orders[a] {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Richardson-extrapolated finite difference of `d_t^l grad^beta G` computed from
/// plain heat-kernel values only.
const FD_STEP: f64 = 0.3;

pub fn fd_heat_derivative(l: u32, beta: &MultiIndex, t: f64, x: &[f64]) -> f64 {
    let n = x.len();
    let g = |tt: f64, xx: &[f64]| heat_kernel(tt, xx, n).unwrap();
    let levels: usize = 5;
    let mut table: Vec<f64> = (0..levels)
        .map(|k| {
            let s = 0.5f64.powi(k as i32);
            central(&g, t, x, l, beta, FD_STEP * t * s, FD_STEP * t.sqrt() * s)
        })
        .collect();
    for m in 1..levels {
        let r = 4f64.powi(m as i32);
        for k in (m..levels).rev() {
            table[k] = (r * table[k] - table[k - 1]) / (r - 1.0);
        }
    }
    table[levels - 1]
}

/// Relative error of the closed form against the finite-difference oracle, with
/// near-zero values measured against the natural size `G(t,0) t^{-w/2}`.
pub fn heat_fd_relative_error(l: u32, beta: &MultiIndex, t: f64, x: &[f64]) -> f64 {
    let n = x.len();
    let spec = KernelSpec::heat(l, beta.clone());
    let exact = heat_kernel_derivative(&spec, t, x).unwrap();
    let fd = fd_heat_derivative(l, beta, t, x);
    let natural = heat_kernel(t, &vec![0.0; n], n).unwrap() * t.powf(-(spec.weight() as f64) / 2.0);
    (exact - fd).abs() / exact.abs().max(natural)
}

/// Every `(l, beta)` with `l + |beta| <= max` in dimension `n`.
pub fn derivative_pairs(n: usize, max: u32) -> Vec<(u32, MultiIndex)> {
    let mut out = Vec::new();
    for l in 0..=max {
        for beta in MultiIndex::all_up_to(n, max - l) {
            out.push((l, beta));
        }
    }
    out
}

use nsasym_core::coeffs::{CoeffKind, Estimate, MomentTable};
use nsasym_core::expansion::{weight_pairs, Expansion};
use nsasym_core::grid::Grid;
use nsasym_core::solver::{make_initial_vorticity, InitialDataSpec};

/// Moment table with real initial moments and deterministic made-up
/// space-time constants; profile moments are computed from the low orders.
pub fn synthetic_table(grid: &Grid) -> MomentTable {
    let spec = InitialDataSpec { amplitude: 0.4, width: 1.0, center: [0.5, 0.25] };
    let omega0 = make_initial_vorticity(&spec, grid).unwrap();
    let mut table = MomentTable::new("synthetic");
    table.set_initial_moments(&omega0, 5).unwrap();
    let mut seed = 0.37f64;
    let mut next = || {
        seed = (seed * 7.13 + 0.61).fract();
        0.02 * (seed - 0.5)
    };
    for w in 1..=4u32 {
        let kind = if w <= 2 { CoeffKind::RawI } else { CoeffKind::Renormalized };
        for (l, beta) in weight_pairs(w) {
            for j in 0..2 {
                let e = Estimate { value: next(), error: 0.0, tail_model: "synthetic".into() };
                table.insert(kind, l, &beta, j, &e);
            }
        }
    }
    let low = Expansion::from_table(&table, 2).unwrap();
    let moments = low.profile_moments(grid, 5).unwrap();
    table.set_profile_moments(&moments);
    table
}

pub fn test_grid() -> Grid {
    Grid::make(2, 12.0, 128).unwrap()
}
