//! Self-similar expansion profiles of the 2-D flow: vorticity profiles
//! `Omega_m`, velocity profiles `U_m`, logarithmic profiles `K_m`, the products
//! `I_p` and the Taylor-remainder integrals `J_m`.
//!
//! Every profile except `J_m` is a finite sum of kernel derivatives with
//! scalar coefficients ([`KernelSum`]). Heat-family terms are evaluated in
//! closed form, nonlocal terms spectrally.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::coeffs::{coeff_key, log_time_constant, profile_key, CoeffKind, MomentTable, ProfileMoments};
use crate::error::{Error, Result};
use crate::field::{Field, Rank};
use crate::grid::Grid;
use crate::kernel::{sample_heat_derivative, KernelSpec};
use crate::multi_index::{factorial, MultiIndex};
use crate::par;
use crate::quad::GaussLegendre;
use crate::spectral::{self, C64};

/// Spatial dimension of the assembled profiles.
pub const DIM: usize = 2;

/// Highest velocity order `2n`.
pub const MAX_ORDER: u32 = 2 * DIM as u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    U,
    K,
    Omega,
    #[serde(rename = "I_p")]
    Ip,
    J,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::U => "U",
            ProfileKind::K => "K",
            ProfileKind::Omega => "Omega",
            ProfileKind::Ip => "I",
            ProfileKind::J => "J",
        }
    }

    pub fn rank(self) -> Rank {
        match self {
            ProfileKind::Omega => Rank::Scalar,
            _ => Rank::Vector,
        }
    }
}

/// `coefficient * t^time_power * spec(t)` placed in one component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub spec: KernelSpec,
    pub coefficient: f64,
    pub component: usize,
    pub time_power: f64,
    pub source: String,
}

/// Linear combination of kernel derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSum {
    pub components: usize,
    pub terms: Vec<Term>,
}

impl KernelSum {
    pub fn new(components: usize) -> Self {
        Self { components, terms: Vec::new() }
    }

    fn push(&mut self, spec: KernelSpec, coefficient: f64, component: usize, time_power: f64, source: &str) {
        self.terms.push(Term { spec, coefficient, component, time_power, source: source.to_string() });
    }

    fn rank(&self) -> Rank {
        if self.components == 1 {
            Rank::Scalar
        } else {
            Rank::Vector
        }
    }

    /// Time-independent parts `sum coefficient * static_symbol`, grouped by
    /// time power, one spectrum per component.
    pub fn static_spectra(&self, grid: &Grid, heat: bool) -> StaticSpectra {
        let mut powers: Vec<f64> = Vec::new();
        for term in &self.terms {
            if !powers.contains(&term.time_power) {
                powers.push(term.time_power);
            }
        }
        let tab = spectral::table(grid);
        powers
            .into_iter()
            .map(|tp| {
                let spectra = (0..self.components)
                    .map(|c| {
                        let terms: Vec<&Term> = self
                            .terms
                            .iter()
                            .filter(|t| t.component == c && t.time_power == tp && (heat || t.spec.is_nonlocal()))
                            .collect();
                        par::map_range(grid.len(), |k| {
                            if tab.nyquist[k] {
                                return C64::new(0.0, 0.0);
                            }
                            terms.iter().map(|t| t.spec.static_symbol(&tab.xi[k]) * t.coefficient).sum()
                        })
                    })
                    .collect();
                (tp, spectra)
            })
            .collect()
    }

    /// Continuum Fourier transform at time `t`.
    pub fn spectrum(&self, t: f64, grid: &Grid, heat: bool) -> Vec<Vec<C64>> {
        combine_spectra(&self.static_spectra(grid, heat), t, grid, self.components)
    }

    /// Samples on `grid`: heat terms in closed form, the rest spectrally.
    pub fn evaluate(&self, t: f64, grid: &Grid) -> Result<Field> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let spectra = self.spectrum(t, grid, false);
        let mut comps: Vec<Vec<f64>> = spectra.iter().map(|s| spectral::from_continuum(grid, s)).collect();
        for term in self.terms.iter().filter(|t| !t.spec.is_nonlocal()) {
            let f = sample_heat_derivative(&term.spec, t, grid)?;
            let scale = term.coefficient * t.powf(term.time_power);
            let comp = &mut comps[term.component];
            par::for_each_mut(comp, |k, v| *v += scale * f.values()[k]);
        }
        field_from(grid, self.rank(), comps, t)
    }

    /// Samples on `grid` with every term evaluated spectrally.
    pub fn evaluate_spectral(&self, t: f64, grid: &Grid) -> Result<Field> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let comps = self.spectrum(t, grid, true).iter().map(|s| spectral::from_continuum(grid, s)).collect();
        field_from(grid, self.rank(), comps, t)
    }

    /// True if every coefficient vanishes.
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient == 0.0)
    }
}

fn combine_spectra(parts: &[(f64, Vec<Vec<C64>>)], t: f64, grid: &Grid, components: usize) -> Vec<Vec<C64>> {
    let tab = spectral::table(grid);
    (0..components)
        .map(|c| {
            par::map_range(grid.len(), |k| {
                let decay = (-t * tab.r2[k]).exp();
                if decay == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                parts.iter().map(|(tp, s)| s[c][k] * t.powf(*tp)).sum::<C64>() * decay
            })
        })
        .collect()
}

fn field_from(grid: &Grid, rank: Rank, comps: Vec<Vec<f64>>, t: f64) -> Result<Field> {
    match rank {
        Rank::Scalar => Field::scalar(*grid, comps.into_iter().next().unwrap_or_default(), t),
        _ => Field::vector(*grid, comps, t),
    }
}

/// All `(l, beta)` with `2l + |beta| = w` in two dimensions.
pub fn weight_pairs(w: u32) -> Vec<(u32, MultiIndex)> {
    (0..=w / 2).flat_map(|l| MultiIndex::all_of_order(DIM, w - 2 * l).into_iter().map(move |b| (l, b))).collect()
}

fn sign(k: u32) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Adds `scale * [d_t^l grad^beta (G delta_jk + R^j R^k G) / (l! beta!)] c^k`
/// to every velocity component `j`.
fn add_duhamel(
    sum: &mut KernelSum,
    l: u32,
    beta: &MultiIndex,
    c: [f64; 2],
    scale: f64,
    time_power: f64,
    source: &str,
) -> Result<()> {
    let f = scale / (factorial(l) * beta.factorial()?);
    for j in 0..DIM {
        sum.push(KernelSpec::heat(l, beta.clone()), f * c[j], j, time_power, source);
        for (k, ck) in c.iter().enumerate() {
            sum.push(KernelSpec::riesz_pair(j, k, l, beta.clone()), f * ck, j, time_power, source);
        }
    }
    Ok(())
}

/// Initial-data part of `U_m`: `(d_2, -d_1) grad^alpha (-Delta)^{-1} G M_alpha / alpha!`.
fn add_initial_velocity(sum: &mut KernelSum, m: u32, table: &MomentTable) -> Result<()> {
    for alpha in MultiIndex::all_of_order(DIM, m + 1) {
        let c = table.initial_moment(&alpha)? / alpha.factorial()?;
        let src = format!("initial:alpha={}", alpha.key());
        sum.push(KernelSpec::grad_inv_laplace(1, 0, alpha.clone()), c, 0, 0.0, &src);
        sum.push(KernelSpec::grad_inv_laplace(0, 0, alpha.clone()), -c, 1, 0.0, &src);
    }
    Ok(())
}

fn spacetime_pair(table: &MomentTable, kind: CoeffKind, l: u32, beta: &MultiIndex) -> Result<[f64; 2]> {
    Ok([table.value(kind, l, beta, 0)?, table.value(kind, l, beta, 1)?])
}

fn profile_pair(moments: &ProfileMoments, p: u32, beta: &MultiIndex) -> Result<[f64; 2]> {
    let get = |j: usize| {
        moments
            .get(&(p, beta.clone(), j))
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(format!("profile moment {}", profile_key(p, beta, j))))
    };
    Ok([get(0)?, get(1)?])
}

/// Kind of the stored space-time constant used at weight `w`.
pub fn constant_kind(w: u32) -> CoeffKind {
    if w <= DIM as u32 {
        CoeffKind::RawI
    } else {
        CoeffKind::Renormalized
    }
}

/// Options of the `J_m` quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JOptions {
    /// Head cutoff `s_min = eps t`.
    pub eps: f64,
    /// Gauss-Legendre nodes per subinterval; half as many give the check value.
    pub nodes: usize,
    /// Allowed relative disagreement between the two rules.
    pub tolerance: f64,
    /// Largest number of head-series weights beyond `m`.
    pub max_head_terms: u32,
    /// Wavevectors with `t |xi|^2 / 2` above this are dropped on `(0, t/2)`.
    pub band: f64,
}

impl Default for JOptions {
    fn default() -> Self {
        Self { eps: 1e-3, nodes: 48, tolerance: 1e-6, max_head_terms: 40, band: 40.0 }
    }
}

/// The assembled expansion of one flow.
#[derive(Debug, Clone, Serialize)]
pub struct Expansion {
    pub max_order: u32,
    pub omega: BTreeMap<u32, KernelSum>,
    pub u: BTreeMap<u32, KernelSum>,
    pub k: BTreeMap<u32, KernelSum>,
    pub j_options: JOptions,
}

impl Expansion {
    /// Builds `Omega_2, Omega_3` and `U_1 ..= U_max_order` (with `K_m` for
    /// `m > n`) from `table`.
    pub fn from_table(table: &MomentTable, max_order: u32) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&max_order) {
            return Err(Error::InvalidArgument(format!("expansion order {max_order} outside 1..={MAX_ORDER}")));
        }
        let mut e = Expansion {
            max_order,
            omega: BTreeMap::new(),
            u: BTreeMap::new(),
            k: BTreeMap::new(),
            j_options: JOptions::default(),
        };
        for m in 2..=DIM as u32 + 1 {
            e.omega.insert(m, omega_sum(m, table)?);
        }
        let needs_high = max_order > DIM as u32;
        let moments = if needs_high { Some(table.profile_moments()?) } else { None };
        for m in 1..=max_order {
            if m <= DIM as u32 {
                e.u.insert(m, u_low_sum(m, table)?);
            } else {
                let moments = moments.as_ref().expect("loaded above");
                e.u.insert(m, u_high_sum(m, table, moments)?);
                e.k.insert(m, k_sum(m, moments)?);
            }
        }
        Ok(e)
    }

    fn omega_sum(&self, m: u32) -> Result<&KernelSum> {
        self.omega
            .get(&m)
            .ok_or_else(|| Error::InvalidArgument(format!("Omega_{m} is defined for 2 <= m <= {}", DIM + 1)))
    }

    fn u_sum(&self, m: u32) -> Result<&KernelSum> {
        self.u
            .get(&m)
            .ok_or_else(|| Error::InvalidArgument(format!("U_{m} is not built (order 1..={})", self.max_order)))
    }

    fn k_sum(&self, m: u32) -> Result<&KernelSum> {
        self.k.get(&m).ok_or_else(|| {
            Error::InvalidArgument(format!("K_{m} is not built (orders {}..={})", DIM + 1, self.max_order))
        })
    }

    /// `Omega_m(t)` (the `12` component of the vorticity tensor).
    pub fn omega_profile(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        self.omega_sum(m)?.evaluate(t, grid)
    }

    /// `U_m(t)` for any built order.
    pub fn u_profile(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        let base = self.u_sum(m)?.evaluate(t, grid)?;
        if m <= DIM as u32 {
            return Ok(base);
        }
        let j = self.j_profile(m, t, grid)?;
        base.sub(&j)
    }

    pub fn u_profile_low(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        if !(1..=DIM as u32).contains(&m) {
            return Err(Error::InvalidArgument(format!("low-order U_m needs 1 <= m <= {DIM}")));
        }
        self.u_profile(m, t, grid)
    }

    pub fn u_profile_high(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        if !(DIM as u32 + 1..=MAX_ORDER).contains(&m) {
            return Err(Error::InvalidArgument(format!("high-order U_m needs {} <= m <= {MAX_ORDER}", DIM + 1)));
        }
        self.u_profile(m, t, grid)
    }

    /// `K_m(t)`; the logarithmic term of the expansion is `K_m(t) log t`.
    pub fn k_profile(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        self.k_sum(m)?.evaluate(t, grid)
    }

    fn check_p(p: u32) -> Result<()> {
        if !(DIM as u32 + 3..=2 * DIM as u32 + 2).contains(&p) {
            return Err(Error::InvalidArgument(format!("I_p needs {} <= p <= {}", DIM + 3, 2 * DIM + 2)));
        }
        Ok(())
    }

    /// `I_p(t) = sum_{m=1}^{p-n-2} Omega_{p-n-m} . U_m` with `(w . u) = (-w u^2, w u^1)`.
    pub fn i_p_profile(&self, p: u32, t: f64, grid: &Grid) -> Result<Field> {
        Self::check_p(p)?;
        let mut acc = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for m in 1..=p - DIM as u32 - 2 {
            let w = self.omega_profile(p - DIM as u32 - m, t, grid)?;
            let u = self.u_profile(m, t, grid)?;
            accumulate_product(&mut acc, w.values(), u.component(0), u.component(1));
        }
        let [a, b] = acc;
        Field::vector(*grid, vec![a, b], t)
    }

    /// Spectral samples of `I_p(s)` from precomputed static spectra.
    fn i_p_spectral(&self, parts: &IpParts, s: f64, grid: &Grid) -> [Vec<f64>; 2] {
        let mut acc = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for (w_parts, u_parts) in &parts.pairs {
            let w = combine_spectra(w_parts, s, grid, 1);
            let u = combine_spectra(u_parts, s, grid, 2);
            let (u1, u2) = spectral::from_continuum_pair(grid, &u[0], &u[1]);
            let w = spectral::from_continuum(grid, &w[0]);
            accumulate_product(&mut acc, &w, &u1, &u2);
        }
        acc
    }

    fn ip_parts(&self, p: u32, grid: &Grid) -> Result<IpParts> {
        Self::check_p(p)?;
        let mut pairs = Vec::new();
        for m in 1..=p - DIM as u32 - 2 {
            let w = self.omega_sum(p - DIM as u32 - m)?.static_spectra(grid, true);
            let u = self.u_sum(m)?.static_spectra(grid, true);
            pairs.push((w, u));
        }
        Ok(IpParts { pairs })
    }

    /// Profile moments `int (-y)^beta I_p^j(1, y) dy` for all `p` and
    /// `|beta| <= max_order`, from samples on `grid`.
    pub fn profile_moments(&self, grid: &Grid, max_order: u32) -> Result<ProfileMoments> {
        let mut out = ProfileMoments::new();
        for p in DIM as u32 + 3..=2 * DIM as u32 + 2 {
            let ip = self.i_p_profile(p, 1.0, grid)?;
            for j in 0..DIM {
                let mom = grid_moments(grid, ip.component(j), max_order);
                for beta in MultiIndex::all_up_to(DIM, max_order) {
                    let v = mom.get(beta.get(0), beta.get(1)) * sign(beta.order());
                    out.insert((p, beta, j), v);
                }
            }
        }
        Ok(out)
    }

    /// `J_m(t)`: the Taylor remainder of `int_0^t (G + R R G)(t-s) * I_{m+2}(s) ds`
    /// beyond weight `m`.
    pub fn j_profile(&self, m: u32, t: f64, grid: &Grid) -> Result<Field> {
        let (spec, _) = self.j_spectrum(m, t, grid)?;
        let (a, b) = spectral::from_continuum_pair(grid, &spec[0], &spec[1]);
        Field::vector(*grid, vec![a, b], t)
    }

    /// Continuum transform of `J_m(t)` and the relative disagreement of the
    /// two quadrature rules.
    ///
    /// On `(0, t/2)` the transform of `I_p(s)` is taken from one sample of
    /// `I_p(1)` on the grid dilated by `1/sqrt(t)`, via
    /// `I_p^(s, xi) = s^{-p/2} I_p^(1, sqrt(s) xi)`; on `(t/2, t)` from samples
    /// of `I_p(s)` on `grid`. Below `eps t` the Taylor remainder is summed from
    /// the moments of `I_p(1)`.
    pub fn j_spectrum(&self, m: u32, t: f64, grid: &Grid) -> Result<([Vec<C64>; 2], f64)> {
        if !(DIM as u32 + 1..=MAX_ORDER).contains(&m) {
            return Err(Error::InvalidArgument(format!("J_m needs {} <= m <= {MAX_ORDER}", DIM + 1)));
        }
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let opts = self.j_options;
        if !(opts.eps > 0.0 && opts.eps < 0.5) {
            return Err(Error::InvalidArgument(format!("head cutoff fraction {} outside (0, 1/2)", opts.eps)));
        }
        let p = m + 2;
        let s_min = opts.eps * t;
        let reference = grid.dilated(1.0 / t.sqrt())?;
        let profile = self.i_p_spectral(&self.ip_parts(p, &reference)?, 1.0, &reference);
        let max_w = m + opts.max_head_terms;
        let ref_moments = [grid_moments(&reference, &profile[0], max_w), grid_moments(&reference, &profile[1], max_w)];
        let ctx = JContext {
            m,
            p,
            t,
            grid,
            reference: &reference,
            profile: &profile,
            moments: &ref_moments,
            parts: self.ip_parts(p, grid)?,
            r2_max: 2.0 * opts.band / t,
        };
        let fine = self.j_quadrature(&ctx, s_min, opts.nodes);
        let coarse = self.j_quadrature(&ctx, s_min, opts.nodes.div_ceil(2));
        let head = j_head(&ctx, s_min, max_w)?;

        let tab = spectral::table(grid);
        let project = |acc: &[Vec<C64>; 2]| -> [Vec<C64>; 2] {
            let mut out = [vec![C64::new(0.0, 0.0); grid.len()], vec![C64::new(0.0, 0.0); grid.len()]];
            for (j, o) in out.iter_mut().enumerate() {
                par::for_each_mut(o, |k, v| {
                    let xi = tab.xi[k];
                    let r2 = tab.r2[k];
                    let mut s = acc[j][k] + head[j][k];
                    if r2 > 0.0 {
                        let dot = xi[0] * (acc[0][k] + head[0][k]) + xi[1] * (acc[1][k] + head[1][k]);
                        s -= dot * (xi[j] / r2);
                    }
                    *v = s;
                });
            }
            out
        };
        let jf = project(&fine);
        let jc = project(&coarse);
        let scale = jf.iter().flat_map(|c| c.iter()).map(|v| v.norm()).fold(0.0, f64::max);
        let diff =
            jf.iter().zip(&jc).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm())).fold(0.0, f64::max);
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if rel > opts.tolerance {
            return Err(Error::Quadrature(format!(
                "J_{m} at t = {t}: {} vs {} nodes disagree by {rel:.2e} (tolerance {:.1e})",
                opts.nodes,
                opts.nodes.div_ceil(2),
                opts.tolerance
            )));
        }
        Ok((jf, rel))
    }

    /// `int_{s_min}^t [e^{-(t-s)|xi|^2} I_p^(s) - e^{-t|xi|^2} T_m(s)] ds` per component.
    fn j_quadrature(&self, ctx: &JContext<'_>, s_min: f64, nodes: usize) -> [Vec<C64>; 2] {
        let (t, grid) = (ctx.t, ctx.grid);
        let rule = GaussLegendre::cached(nodes);
        let tab = spectral::table(grid);
        let taylor = taylor_table(ctx.m);
        let mut acc = [vec![C64::new(0.0, 0.0); grid.len()], vec![C64::new(0.0, 0.0); grid.len()]];
        let band = Band::new(grid, ctx.r2_max);

        for (u, wu) in rule.on(s_min.ln(), (0.5 * t).ln()) {
            let (s, w) = (u.exp(), wu * u.exp());
            let scale = s.powf(-(ctx.p as f64) / 2.0);
            for (k, a) in acc.iter_mut().enumerate() {
                let f = chirp_transform(ctx.reference, &ctx.profile[k], s.sqrt(), &band);
                let mom = ctx.moments[k].rescaled(ctx.p, s, ctx.m);
                for (bi, &q) in band.flat.iter().enumerate() {
                    let Some(q) = q else { continue };
                    let r2 = tab.r2[q];
                    let full = (-(t - s) * r2).exp();
                    let base = (-t * r2).exp();
                    let v = f[bi] * (scale * full) - taylor_eval(&taylor, &mom, s * r2, &tab.xi[q]) * base;
                    a[q] += v * w;
                }
            }
        }

        for (s, w) in rule.on(0.5 * t, t) {
            let ip = self.i_p_spectral(&ctx.parts, s, grid);
            let (f0, f1) = spectral::continuum_transform_pair(grid, &ip[0], &ip[1]);
            let spectra = [f0, f1];
            for (k, a) in acc.iter_mut().enumerate() {
                let mom = grid_moments(grid, &ip[k], ctx.m);
                let f = &spectra[k];
                par::for_each_mut(a, |q, v| {
                    let r2 = tab.r2[q];
                    let full = (-(t - s) * r2).exp();
                    let base = (-t * r2).exp();
                    let mut sum = f[q] * full;
                    if base > 0.0 {
                        sum -= taylor_eval(&taylor, &mom, s * r2, &tab.xi[q]) * base;
                    }
                    *v += sum * w;
                });
            }
        }
        acc
    }

    /// `sum_{m <= M} U_m(t)` plus, if `with_logs`, `sum K_m(t) log t`.
    pub fn expansion_sum(&self, t: f64, order: u32, with_logs: bool, grid: &Grid) -> Result<Field> {
        if order > self.max_order {
            return Err(Error::InvalidArgument(format!("order {order} exceeds the built order {}", self.max_order)));
        }
        let mut acc = Field::zeros(*grid, Rank::Vector, t);
        for m in 1..=order {
            acc = acc.add(&self.u_profile(m, t, grid)?)?;
            if with_logs && m > DIM as u32 && t != 1.0 {
                acc = acc.axpy(t.ln(), &self.k_profile(m, t, grid)?)?;
            }
        }
        Ok(acc)
    }

    /// Order-`m` vorticity sum `sum_{k=2}^{m} Omega_k(t)`.
    pub fn omega_sum_profile(&self, t: f64, order: u32, grid: &Grid) -> Result<Field> {
        let mut acc = Field::zeros(*grid, Rank::Scalar, t);
        for m in 2..=order {
            acc = acc.add(&self.omega_profile(m, t, grid)?)?;
        }
        Ok(acc)
    }

    /// Any profile by kind and order.
    pub fn profile(&self, kind: ProfileKind, order: u32, t: f64, grid: &Grid) -> Result<Field> {
        match kind {
            ProfileKind::U => self.u_profile(order, t, grid),
            ProfileKind::K => self.k_profile(order, t, grid),
            ProfileKind::Omega => self.omega_profile(order, t, grid),
            ProfileKind::Ip => self.i_p_profile(order, t, grid),
            ProfileKind::J => self.j_profile(order, t, grid),
        }
    }

    /// Every profile this expansion can evaluate.
    pub fn available(&self) -> Vec<(ProfileKind, u32)> {
        let mut v: Vec<(ProfileKind, u32)> = self.omega.keys().map(|m| (ProfileKind::Omega, *m)).collect();
        v.extend(self.u.keys().map(|m| (ProfileKind::U, *m)));
        v.extend(self.k.keys().map(|m| (ProfileKind::K, *m)));
        if self.max_order >= 2 {
            for p in DIM as u32 + 3..=(self.max_order + 2).min(2 * DIM as u32 + 2) {
                if p - DIM as u32 - 2 <= self.max_order {
                    v.push((ProfileKind::Ip, p));
                }
            }
        }
        v.extend(self.k.keys().map(|m| (ProfileKind::J, *m)));
        v
    }

    /// Audit record of one profile.
    pub fn manifest(&self, kind: ProfileKind, order: u32) -> Result<ProfileManifest> {
        let (terms, constituents) = match kind {
            ProfileKind::U => {
                let c = if order > DIM as u32 { vec![format!("-J{order}")] } else { Vec::new() };
                (self.u_sum(order)?.terms.clone(), c)
            }
            ProfileKind::K => (self.k_sum(order)?.terms.clone(), Vec::new()),
            ProfileKind::Omega => (self.omega_sum(order)?.terms.clone(), Vec::new()),
            ProfileKind::Ip => {
                Self::check_p(order)?;
                let c =
                    (1..=order - DIM as u32 - 2).map(|m| format!("Omega{} . U{m}", order - DIM as u32 - m)).collect();
                (Vec::new(), c)
            }
            ProfileKind::J => (Vec::new(), vec![format!("I{}", order + 2)]),
        };
        let scaling = DIM as i32 + order as i32;
        Ok(ProfileManifest {
            kind,
            order,
            name: format!("{}{order}", kind.name()),
            scaling_exponent: scaling,
            terms,
            constituents,
            j_options: if kind == ProfileKind::J || (kind == ProfileKind::U && order > DIM as u32) {
                Some(self.j_options)
            } else {
                None
            },
        })
    }
}

/// Manifest entry for one profile.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileManifest {
    pub kind: ProfileKind,
    pub order: u32,
    pub name: String,
    pub scaling_exponent: i32,
    pub terms: Vec<Term>,
    pub constituents: Vec<String>,
    pub j_options: Option<JOptions>,
}

struct JContext<'a> {
    m: u32,
    p: u32,
    t: f64,
    grid: &'a Grid,
    reference: &'a Grid,
    profile: &'a [Vec<f64>; 2],
    moments: &'a [Moments; 2],
    parts: IpParts,
    r2_max: f64,
}

/// Square block of low wavevectors along both axes; `flat` maps each block
/// entry to its spectral index when `|xi|^2 <= r2_max`.
struct Band {
    indices: Vec<usize>,
    xi: Vec<f64>,
    flat: Vec<Option<usize>>,
}

impl Band {
    fn new(grid: &Grid, r2_max: f64) -> Self {
        let n = grid.points();
        let indices: Vec<usize> =
            (0..n).filter(|&i| !grid.is_nyquist(i) && grid.wavenumber(i).powi(2) <= r2_max).collect();
        let xi: Vec<f64> = indices.iter().map(|&i| grid.wavenumber(i)).collect();
        let mut flat = Vec::with_capacity(indices.len() * indices.len());
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                flat.push((xi[a] * xi[a] + xi[b] * xi[b] <= r2_max).then_some(i * n + j));
            }
        }
        Self { indices, xi, flat }
    }
}

/// `h^2 sum_y f(y) e^{-i c xi . y}` for every band wavevector, separably.
fn chirp_transform(grid: &Grid, f: &[f64], c: f64, band: &Band) -> Vec<C64> {
    let n = grid.points();
    let nb = band.indices.len();
    let ys: Vec<f64> = (0..n).map(|i| grid.node(i)).collect();
    let phase: Vec<C64> =
        band.xi.iter().flat_map(|&x| ys.iter().map(move |&y| C64::from_polar(1.0, -c * x * y))).collect();
    // rows[i][b] = sum_j f(i, j) e^{-i c xi_b y_j}
    let rows = par::map_range(n, |i| {
        let row = &f[i * n..(i + 1) * n];
        (0..nb)
            .map(|b| {
                let e = &phase[b * n..(b + 1) * n];
                row.iter().zip(e).map(|(v, z)| z * v).sum::<C64>()
            })
            .collect::<Vec<C64>>()
    });
    let vol = grid.cell_volume();
    par::map_range(nb * nb, |q| {
        let (a, b) = (q / nb, q % nb);
        if band.flat[q].is_none() {
            return C64::new(0.0, 0.0);
        }
        let e = &phase[a * n..(a + 1) * n];
        rows.iter().zip(e).map(|(r, z)| z * r[b]).sum::<C64>() * vol
    })
}

/// Analytic head `int_0^{s_min}` from the moments of `I_p(1)`.
fn j_head(ctx: &JContext<'_>, s_min: f64, max_w: u32) -> Result<[Vec<C64>; 2]> {
    let (t, grid, m) = (ctx.t, ctx.grid, ctx.m);
    let tab = spectral::table(grid);
    let mut out = [vec![C64::new(0.0, 0.0); grid.len()], vec![C64::new(0.0, 0.0); grid.len()]];
    let mut failed = false;
    for (k, o) in out.iter_mut().enumerate() {
        let mom = &ctx.moments[k];
        let results = par::map_range(grid.len(), |q| {
            let r2 = tab.r2[q];
            if r2 > ctx.r2_max {
                return Some(C64::new(0.0, 0.0));
            }
            head_series(mom, m, max_w, s_min, r2, &tab.xi[q]).map(|v| v * (-t * r2).exp())
        });
        for (q, r) in results.into_iter().enumerate() {
            match r {
                Some(v) => o[q] = v,
                None => failed = true,
            }
        }
    }
    if failed {
        return Err(Error::Quadrature(format!(
            "J_{m} head series did not converge within weight {max_w} (s_min = {s_min:.3e})"
        )));
    }
    Ok(out)
}

/// `(time power, component spectra)` of every term of a profile sum.
pub type StaticSpectra = Vec<(f64, Vec<Vec<C64>>)>;

struct IpParts {
    pairs: Vec<(StaticSpectra, StaticSpectra)>,
}

fn accumulate_product(acc: &mut [Vec<f64>; 2], w: &[f64], u1: &[f64], u2: &[f64]) {
    let [a, b] = acc;
    par::for_each_mut(a, |k, v| *v -= w[k] * u2[k]);
    par::for_each_mut(b, |k, v| *v += w[k] * u1[k]);
}

/// Grid moments `int y^beta f dy` for `|beta| <= max_order`, computed separably.
#[derive(Debug, Clone)]
pub struct Moments {
    max: u32,
    values: Vec<f64>,
}

impl Moments {
    pub fn get(&self, b1: u32, b2: u32) -> f64 {
        self.values[(b1 * (self.max + 1) + b2) as usize]
    }

    /// Moments of `I_p(s)` from those of `I_p(1)`, up to order `order`.
    fn rescaled(&self, p: u32, s: f64, order: u32) -> Moments {
        let d = order + 1;
        let mut values = vec![0.0; (d * d) as usize];
        for b1 in 0..d {
            for b2 in 0..d - b1 {
                let e = ((b1 + b2) as f64 - p as f64) / 2.0;
                values[(b1 * d + b2) as usize] = self.get(b1, b2) * s.powf(e);
            }
        }
        Moments { max: order, values }
    }
}

pub fn grid_moments(grid: &Grid, f: &[f64], max_order: u32) -> Moments {
    let n = grid.points();
    let d = max_order as usize + 1;
    let xs: Vec<f64> = (0..n).map(|i| grid.node(i)).collect();
    // rows[i][b2] = sum_j y2^b2 f(i, j)
    let rows = par::map_range(n, |i| {
        let mut acc = vec![0.0; d];
        for (j, &y) in xs.iter().enumerate() {
            let mut pw = f[i * n + j];
            for a in acc.iter_mut() {
                *a += pw;
                pw *= y;
            }
        }
        acc
    });
    let vol = grid.cell_volume();
    let mut values = vec![0.0; d * d];
    for b1 in 0..d {
        for b2 in 0..d - b1 {
            let mut s = 0.0;
            for (i, row) in rows.iter().enumerate() {
                s += xs[i].powi(b1 as i32) * row[b2];
            }
            values[b1 * d + b2] = s * vol;
        }
    }
    Moments { max: max_order, values }
}

/// `(l, beta, 1/(l! beta!))` for every weight `0 <= 2l + |beta| <= m`.
fn taylor_table(m: u32) -> Vec<(u32, u32, u32, f64)> {
    let mut v = Vec::new();
    for w in 0..=m {
        for (l, beta) in weight_pairs(w) {
            let c = 1.0 / (factorial(l) * factorial(beta.get(0)) * factorial(beta.get(1)));
            v.push((l, beta.get(0), beta.get(1), c));
        }
    }
    v
}

/// `sum (s|xi|^2)^l / l! (-i xi)^beta / beta! mom_beta`.
fn taylor_eval(table: &[(u32, u32, u32, f64)], mom: &Moments, sr2: f64, xi: &[f64; 3]) -> C64 {
    let mi = C64::new(0.0, -1.0);
    let mut acc = C64::new(0.0, 0.0);
    for &(l, b1, b2, c) in table {
        let z = (mi * xi[0]).powu(b1) * (mi * xi[1]).powu(b2);
        acc += z * (sr2.powi(l as i32) * c * mom.get(b1, b2));
    }
    acc
}

/// `sum_{w > m} s_min^{(w-m)/2} 2/(w-m) sum_l |xi|^{2l}/l! H_{w-2l}(xi)` with
/// `H_d = sum_{|beta|=d} (-i xi)^beta / beta! mu_beta(1)`; `None` if the
/// series has not settled by weight `max_w`.
fn head_series(mom: &Moments, m: u32, max_w: u32, s_min: f64, r2: f64, xi: &[f64; 3]) -> Option<C64> {
    let mi = C64::new(0.0, -1.0);
    let (z1, z2) = (mi * xi[0], mi * xi[1]);
    let mut h: Vec<C64> = Vec::with_capacity(max_w as usize + 1);
    let mut acc = C64::new(0.0, 0.0);
    let mut quiet = 0;
    for w in 0..=max_w {
        // H_w
        let mut hw = C64::new(0.0, 0.0);
        let mut f1 = 1.0;
        for b1 in 0..=w {
            if b1 > 0 {
                f1 *= b1 as f64;
            }
            let b2 = w - b1;
            hw += z1.powu(b1) * z2.powu(b2) * (mom.get(b1, b2) / (f1 * factorial(b2)));
        }
        h.push(hw);
        if w <= m {
            continue;
        }
        let mut term = C64::new(0.0, 0.0);
        let mut pl = 1.0;
        for l in 0..=w / 2 {
            if l > 0 {
                pl *= r2 / l as f64;
            }
            term += h[(w - 2 * l) as usize] * pl;
        }
        let d = (w - m) as f64;
        term *= s_min.powf(d / 2.0) * 2.0 / d;
        acc += term;
        if term.norm() <= 1e-16 * acc.norm() || term.norm() < f64::MIN_POSITIVE {
            quiet += 1;
            if quiet >= 2 {
                return Some(acc);
            }
        } else {
            quiet = 0;
        }
    }
    None
}

/// `Omega_m = sum_{|alpha|=m} grad^alpha G M_alpha/alpha!
///   + sum_{2l+|beta|=m-1} d_t^l grad^beta (d_2 G c^1 - d_1 G c^2) / (l! beta!)`.
fn omega_sum(m: u32, table: &MomentTable) -> Result<KernelSum> {
    let mut sum = KernelSum::new(1);
    for alpha in MultiIndex::all_of_order(DIM, m) {
        let c = table.initial_moment(&alpha)? / alpha.factorial()?;
        sum.push(KernelSpec::heat(0, alpha.clone()), c, 0, 0.0, &format!("initial:alpha={}", alpha.key()));
    }
    let w = m - 1;
    for (l, beta) in weight_pairs(w) {
        let kind = constant_kind(w);
        let c = spacetime_pair(table, kind, l, &beta)?;
        let f = 1.0 / (factorial(l) * beta.factorial()?);
        let src = coeff_key(kind, l, &beta, 0).replace(":j=0", "");
        sum.push(KernelSpec::heat(l, beta.add_unit(1)), f * c[0], 0, 0.0, &src);
        sum.push(KernelSpec::heat(l, beta.add_unit(0)), -f * c[1], 0, 0.0, &src);
    }
    Ok(sum)
}

/// `U_m` for `1 <= m <= n`.
fn u_low_sum(m: u32, table: &MomentTable) -> Result<KernelSum> {
    let mut sum = KernelSum::new(DIM);
    add_initial_velocity(&mut sum, m, table)?;
    for (l, beta) in weight_pairs(m) {
        let c = spacetime_pair(table, CoeffKind::RawI, l, &beta)?;
        let src = format!("raw_i:l={l}:beta={}", beta.key());
        add_duhamel(&mut sum, l, &beta, c, -1.0, 0.0, &src)?;
    }
    Ok(sum)
}

/// Kernel-sum part of `U_m` for `n < m <= 2n` (the full profile subtracts `J_m`).
fn u_high_sum(m: u32, table: &MomentTable, moments: &ProfileMoments) -> Result<KernelSum> {
    let p = m + 2;
    let mut sum = KernelSum::new(DIM);
    add_initial_velocity(&mut sum, m, table)?;
    for (l, beta) in weight_pairs(m) {
        let c = spacetime_pair(table, constant_kind(m), l, &beta)?;
        let mp = profile_pair(moments, p, &beta)?;
        let d = sign(l) * log_time_constant(l);
        let c_eff = [c[0] + d * mp[0], c[1] + d * mp[1]];
        let src = format!("renormalized+log_constant:l={l}:beta={}", beta.key());
        add_duhamel(&mut sum, l, &beta, c_eff, -1.0, 0.0, &src)?;
    }
    for w in 1..m {
        for (l, beta) in weight_pairs(w) {
            let mp = profile_pair(moments, p, &beta)?;
            let c = [sign(l) * mp[0], sign(l) * mp[1]];
            let src = format!("tail:p={p}:l={l}:beta={}", beta.key());
            add_duhamel(&mut sum, l, &beta, c, 2.0 / (m - w) as f64, (w as f64 - m as f64) / 2.0, &src)?;
        }
    }
    Ok(sum)
}

/// `K_m = -sum_{2l+|beta|=m} d_t^l grad^beta (G delta + R R G)/(l! beta!) (-1)^l m_{m+2}(beta)`.
fn k_sum(m: u32, moments: &ProfileMoments) -> Result<KernelSum> {
    let mut sum = KernelSum::new(DIM);
    for (l, beta) in weight_pairs(m) {
        let mp = profile_pair(moments, m + 2, &beta)?;
        let c = [sign(l) * mp[0], sign(l) * mp[1]];
        let src = format!("log_coeff:p={}:l={l}:beta={}", m + 2, beta.key());
        add_duhamel(&mut sum, l, &beta, c, -1.0, 0.0, &src)?;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_enumeration() {
        assert_eq!(weight_pairs(1).len(), 2);
        assert_eq!(weight_pairs(2).len(), 4);
        assert_eq!(weight_pairs(3).len(), 6);
        assert_eq!(weight_pairs(4).len(), 9);
    }

    #[test]
    fn separable_moments_match_direct_sums() {
        let g = Grid::make(2, 4.0, 32).unwrap();
        let f = Field::from_fn(g, 1.0, |x| (-(x[0] - 0.3).powi(2) - x[1] * x[1]).exp() * (1.0 + x[1])).unwrap();
        let m = grid_moments(&g, f.values(), 4);
        for beta in MultiIndex::all_up_to(2, 4) {
            let direct = f.moment(&beta).unwrap()[0];
            assert!((m.get(beta.get(0), beta.get(1)) - direct).abs() < 1e-12, "{beta}");
        }
    }
}
