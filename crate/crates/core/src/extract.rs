//! Assembles the full [`MomentTable`] of a simulated flow.

use crate::coeffs::{raw_moment, renormalized_constant, CoeffKind, Estimate, MomentTable, Renormalized};
use crate::error::{Error, Result};
use crate::expansion::{weight_pairs, Expansion, DIM, MAX_ORDER};
use crate::field::Field;
use crate::multi_index::MultiIndex;
use crate::par;
use crate::solver::Trajectory;

/// Highest `|beta|` of the stored profile moments.
pub const PROFILE_MOMENT_ORDER: u32 = MAX_ORDER;

/// Extra diagnostics of one renormalized weight.
#[derive(Debug, Clone)]
pub struct RenormalizedEntry {
    pub l: u32,
    pub beta: MultiIndex,
    pub component: usize,
    pub result: Renormalized,
}

/// Output of [`extract_table`].
#[derive(Debug, Clone)]
pub struct Extraction {
    pub table: MomentTable,
    pub renormalized: Vec<RenormalizedEntry>,
}

/// Initial moments up to `2n+1`, raw space-time moments for weights `1..=n`,
/// and for `max_order > n` the profile moments, renormalized constants and
/// logarithmic coefficients up to weight `max_order`.
pub fn extract_table(run_id: &str, omega0: &Field, trajectory: &Trajectory, max_order: u32) -> Result<Extraction> {
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::InvalidArgument(format!("expansion order {max_order} outside 1..={MAX_ORDER}")));
    }
    let mut table = MomentTable::new(run_id);
    table.set_initial_moments(omega0, 2 * DIM as u32 + 1)?;
    let history = &trajectory.history;

    let raw_jobs: Vec<(u32, MultiIndex, usize)> =
        (1..=DIM as u32).flat_map(weight_pairs).flat_map(|(l, b)| (0..DIM).map(move |j| (l, b.clone(), j))).collect();
    let raw = par::map_vec(raw_jobs.clone(), |(l, b, j)| raw_moment(history, l, &b, j, DIM));
    for ((l, b, j), est) in raw_jobs.iter().zip(raw) {
        table.insert(CoeffKind::RawI, *l, b, *j, &est?);
    }
    if max_order <= DIM as u32 {
        return Ok(Extraction { table, renormalized: Vec::new() });
    }

    let low = Expansion::from_table(&table, DIM as u32)?;
    let moments = low.profile_moments(&trajectory.grid, PROFILE_MOMENT_ORDER)?;
    table.set_profile_moments(&moments);

    let jobs: Vec<(u32, MultiIndex, usize)> = (DIM as u32 + 1..=max_order)
        .flat_map(weight_pairs)
        .flat_map(|(l, b)| (0..DIM).map(move |j| (l, b.clone(), j)))
        .collect();
    let results = par::map_vec(jobs.clone(), |(l, b, j)| renormalized_constant(history, l, &b, j, DIM, &moments));
    let mut renormalized = Vec::with_capacity(jobs.len());
    for ((l, beta, j), r) in jobs.into_iter().zip(results) {
        let r = r?;
        table.insert(CoeffKind::Renormalized, l, &beta, j, &r.constant);
        let log = Estimate { value: r.log, error: 0.0, tail_model: "profile moment".into() };
        table.insert(CoeffKind::LogCoeff, l, &beta, j, &log);
        renormalized.push(RenormalizedEntry { l, beta, component: j, result: r });
    }
    Ok(Extraction { table, renormalized })
}
