//! Scalar coefficients of the expansion: initial vorticity moments, space-time
//! moments of `I[u]`, their renormalized constants and the logarithmic
//! coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::multi_index::{binomial, MultiIndex};
use crate::solver::MomentHistory;

/// Which integral a stored coefficient is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffKind {
    /// `int_0^inf int (-s)^l (-y)^beta I dy ds` (convergent orders only).
    RawI,
    /// Constant term of the renormalized integral.
    Renormalized,
    /// `int (-1)^l (-y)^beta I_p(1, y) dy` with `p = 2l + |beta| + 2`.
    LogCoeff,
}

impl fmt::Display for CoeffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoeffKind::RawI => "raw_i",
            CoeffKind::Renormalized => "renormalized",
            CoeffKind::LogCoeff => "log_coeff",
        })
    }
}

/// Value with an additive error bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub tail_model: String,
}

/// One stored space-time coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub kind: CoeffKind,
    pub l: u32,
    pub beta: MultiIndex,
    pub component: usize,
    pub value: f64,
    pub error: f64,
    pub tail_model: String,
    pub run_id: String,
}

impl Coefficient {
    pub fn key(&self) -> String {
        coeff_key(self.kind, self.l, &self.beta, self.component)
    }
}

pub fn coeff_key(kind: CoeffKind, l: u32, beta: &MultiIndex, component: usize) -> String {
    format!("{kind}:l={l}:beta={}:j={component}", beta.key())
}

pub fn profile_key(p: u32, beta: &MultiIndex, j: usize) -> String {
    format!("p={p}:beta={}:j={j}", beta.key())
}

/// Initial moments and space-time coefficients of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub run_id: String,
    /// Hash of the configuration that produced the run, if any.
    #[serde(default)]
    pub config_hash: String,
    /// `alpha.key() -> int (-y)^alpha w0 dy`.
    pub initial_moments: BTreeMap<String, f64>,
    pub spacetime: BTreeMap<String, Coefficient>,
    /// `"p=5:beta=1,0:j=0" -> int (-y)^beta I_p^j(1, y) dy`.
    #[serde(default)]
    pub profile_moments: BTreeMap<String, f64>,
}

impl MomentTable {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self { run_id: run_id.into(), ..Default::default() }
    }

    /// Records `int (-y)^alpha w0 dy` for `|alpha| <= max_order`.
    pub fn set_initial_moments(&mut self, omega0: &Field, max_order: u32) -> Result<()> {
        for alpha in MultiIndex::all_up_to(omega0.grid().dim(), max_order) {
            let sign = if alpha.order() % 2 == 0 { 1.0 } else { -1.0 };
            let m = omega0.moment(&alpha)?[0];
            self.initial_moments.insert(alpha.key(), sign * m);
        }
        Ok(())
    }

    pub fn initial_moment(&self, alpha: &MultiIndex) -> Result<f64> {
        self.initial_moments
            .get(&alpha.key())
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(format!("initial moment {alpha}")))
    }

    pub fn insert(&mut self, kind: CoeffKind, l: u32, beta: &MultiIndex, component: usize, est: &Estimate) {
        let c = Coefficient {
            kind,
            l,
            beta: beta.clone(),
            component,
            value: est.value,
            error: est.error,
            tail_model: est.tail_model.clone(),
            run_id: self.run_id.clone(),
        };
        self.spacetime.insert(c.key(), c);
    }

    pub fn get(&self, kind: CoeffKind, l: u32, beta: &MultiIndex, component: usize) -> Result<&Coefficient> {
        let key = coeff_key(kind, l, beta, component);
        self.spacetime.get(&key).ok_or(Error::MissingCoefficient(key))
    }

    pub fn value(&self, kind: CoeffKind, l: u32, beta: &MultiIndex, component: usize) -> Result<f64> {
        Ok(self.get(kind, l, beta, component)?.value)
    }

    pub fn set_profile_moments(&mut self, moments: &ProfileMoments) {
        for ((p, beta, j), v) in moments {
            self.profile_moments.insert(profile_key(*p, beta, *j), *v);
        }
    }

    pub fn profile_moments(&self) -> Result<ProfileMoments> {
        let mut out = ProfileMoments::new();
        for (key, v) in &self.profile_moments {
            let bad = || Error::InvalidArgument(format!("bad profile moment key {key:?}"));
            let mut parts = key.split(':');
            let p = parts.next().and_then(|s| s.strip_prefix("p=")).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let beta = MultiIndex::parse_key(parts.next().and_then(|s| s.strip_prefix("beta=")).ok_or_else(bad)?)?;
            let j = parts.next().and_then(|s| s.strip_prefix("j=")).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            out.insert((p, beta, j), *v);
        }
        Ok(out)
    }

    /// Coefficients sorted by `(l, |beta|, beta, kind, component)`.
    pub fn sorted(&self) -> Vec<&Coefficient> {
        let mut v: Vec<&Coefficient> = self.spacetime.values().collect();
        v.sort_by(|a, b| {
            (a.l, a.beta.order(), &a.beta, a.kind, a.component).cmp(&(
                b.l,
                b.beta.order(),
                &b.beta,
                b.kind,
                b.component,
            ))
        });
        v
    }

    /// Human-readable CSV mirror.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,l,beta,component,value,error,tail_model,run_id\n");
        for c in self.sorted() {
            out.push_str(&format!(
                "{},{},\"{}\",{},{:.17e},{:.6e},\"{}\",{}\n",
                c.kind,
                c.l,
                c.beta.key(),
                c.component,
                c.value,
                c.error,
                c.tail_model,
                c.run_id
            ));
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `int_0^t s^l (1+s)^{-l-1} ds` in closed form:
/// `log(1+t) + sum_{k<l} C(l,k) (-1)^{l-k} (1 - (1+t)^{-(l-k)}) / (l-k)`.
pub fn log_time_integral(l: u32, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let x = 1.0 / (1.0 + t);
    let mut v = t.ln_1p();
    for k in 0..l {
        let r = (l - k) as i32;
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        v += binomial(l, k) * sign * (1.0 - x.powi(r)) / r as f64;
    }
    Ok(v)
}

/// `lim_{t -> inf} (log_time_integral(l, t) - log t)`.
pub fn log_time_constant(l: u32) -> f64 {
    (1..=l)
        .map(|r| {
            let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
            binomial(l, r) * sign / r as f64
        })
        .sum()
}

/// `int_t^inf s^{l + (|beta| - p)/2} ds * moment`, the tail of a
/// self-similar profile moment.
pub fn profile_tail(p: u32, l: u32, beta_order: u32, moment: f64, t: f64) -> Result<f64> {
    let d = p as i64 - 2 * l as i64 - beta_order as i64 - 2;
    if d <= 0 {
        return Err(Error::Divergent { exponent: (2 * l + beta_order) as f64 / 2.0 - p as f64 / 2.0, end: "infinity" });
    }
    Ok(2.0 * t.powf(-(d as f64) / 2.0) / d as f64 * moment)
}

/// `k`-th term of `int_t^inf [s^l (1+s)^{-l-1} - 1/s] ds * moment`, which
/// equals `C(-l-1, k) t^{-k} / k * moment`.
pub fn shifted_tail_term(k: u32, l: u32, moment: f64, t: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (-(l as f64) - 1.0 - i as f64) / (i + 1) as f64;
    }
    c * t.powi(-(k as i32)) / k as f64 * moment
}

/// A profile moment subtracted from the integrand: `(-1)^l s^l S^{(|beta|-p)/2} m`
/// with `S = s` or, when `shifted`, `S = 1 + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtrahend {
    pub p: u32,
    pub moment: f64,
    pub shifted: bool,
}

impl Subtrahend {
    fn exponent(&self, beta_order: u32) -> f64 {
        (beta_order as f64 - self.p as f64) / 2.0
    }

    fn eval(&self, l: u32, beta_order: u32, s: f64) -> f64 {
        let sign = if l.is_multiple_of(2) { 1.0 } else { -1.0 };
        let base = if self.shifted { 1.0 + s } else { s };
        sign * s.powi(l as i32) * base.powf(self.exponent(beta_order)) * self.moment
    }

    /// Closed-form integral over `[0, t]`.
    fn integral(&self, l: u32, beta_order: u32, t: f64) -> Result<f64> {
        let sign = if l.is_multiple_of(2) { 1.0 } else { -1.0 };
        let e = l as f64 + self.exponent(beta_order);
        if self.shifted {
            if self.p != 2 * l + beta_order + 2 {
                return Err(Error::InvalidArgument("shifted subtrahends must have p = 2l + |beta| + 2".into()));
            }
            return Ok(sign * self.moment * log_time_integral(l, t)?);
        }
        if e <= -1.0 {
            return Err(Error::Divergent { exponent: e, end: "zero" });
        }
        Ok(sign * self.moment * t.powf(e + 1.0) / (e + 1.0))
    }
}

/// Leading and next tail exponents of the integrand `(-s)^l s^{(|beta|-p)/2}`
/// with the smallest unsubtracted profile order `p_next`.
pub fn tail_exponents(l: u32, beta_order: u32, p_next: u32) -> (f64, f64) {
    let e = l as f64 + (beta_order as f64 - p_next as f64) / 2.0;
    (e, e - 0.5)
}

/// Data of one space-time integrand: `D(s) = (-s)^l int (-y)^beta I^j(s, y) dy`.
pub fn integrand_series(history: &MomentHistory, l: u32, beta: &MultiIndex, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let series = history
        .series(beta, j)
        .ok_or_else(|| Error::MissingCoefficient(format!("history moment {beta} of component {j}")))?;
    let sign = if (l + beta.order()).is_multiple_of(2) { 1.0 } else { -1.0 };
    let d = history.times.iter().zip(&series).map(|(&s, &v)| sign * s.powi(l as i32) * v).collect();
    Ok((history.times.clone(), d))
}

fn trapezoid(s: &[f64], f: &[f64]) -> f64 {
    s.windows(2).zip(f.windows(2)).map(|(ds, df)| 0.5 * (ds[1] - ds[0]) * (df[0] + df[1])).sum()
}

/// Least-squares fit `r ~ a s^e1 + b s^e2` over the samples; returns `(a, b)`.
fn fit_two_powers(s: &[f64], r: &[f64], e1: f64, e2: f64, scale: f64) -> Option<(f64, f64)> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&si, &ri) in s.iter().zip(r) {
        let x = si / scale;
        let (p, q) = (x.powf(e1), x.powf(e2));
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
        b1 += p * ri;
        b2 += q * ri;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-14 * a11 * a22 {
        return None;
    }
    Some(((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det))
}

fn fit_one_power(s: &[f64], r: &[f64], e1: f64, scale: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&si, &ri) in s.iter().zip(r) {
        let p = (si / scale).powf(e1);
        num += p * ri;
        den += p * p;
    }
    num / den
}

/// Free log-log slope of `|r|`, or `None` if `r` changes sign.
fn free_slope(s: &[f64], r: &[f64]) -> Option<f64> {
    if r.contains(&0.0) || !(r.iter().all(|v| *v > 0.0) || r.iter().all(|v| *v < 0.0)) {
        return None;
    }
    let x: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = r.iter().map(|v| v.abs().ln()).collect();
    Some(linear_slope(&x, &y).0)
}

/// Ordinary least-squares `(slope, intercept)`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Options of [`spacetime_moment`].
#[derive(Debug, Clone, PartialEq)]
pub struct TailModel {
    /// Leading decay exponent of the renormalized integrand.
    pub leading: f64,
    /// Fit window as a fraction of the final time: `[fraction * T, T]`.
    pub window_fraction: f64,
}

impl TailModel {
    pub fn from_exponent(leading: f64) -> Self {
        Self { leading, window_fraction: 0.25 }
    }
}

/// Minimum number of samples in the tail window.
pub const MIN_TAIL_SAMPLES: usize = 6;

/// `int_{s_0}^inf [D(s) - sum subtrahends(s)] ds + int_0^{s_0} ... ` where
/// `D(s) = (-s)^l int (-y)^beta I^j` comes from the recorded history: trapezoid
/// on the data, closed forms for the subtrahends, and a two-power tail model.
pub fn spacetime_moment(
    history: &MomentHistory,
    l: u32,
    beta: &MultiIndex,
    j: usize,
    subtrahends: &[Subtrahend],
    tail: &TailModel,
) -> Result<Estimate> {
    let w = beta.order();
    if tail.leading >= -1.0 {
        return Err(Error::Divergent { exponent: tail.leading, end: "infinity" });
    }
    let (s, d) = integrand_series(history, l, beta, j)?;
    if s.len() < 3 {
        return Err(Error::WindowTooShort(s.len(), 3));
    }
    let t_end = *s.last().expect("nonempty");
    let r: Vec<f64> = s.iter().zip(&d).map(|(&si, &di)| renormalized_integrand(l, w, subtrahends, si, di)).collect();

    let data = trapezoid(&s, &d);
    let coarse: (Vec<f64>, Vec<f64>) = s.iter().zip(&d).step_by(2).map(|(a, b)| (*a, *b)).unzip();
    let mut trap_err = (data - trapezoid(&coarse.0, &coarse.1)).abs() / 3.0;
    if s.len() % 2 == 0 {
        trap_err += 0.5 * (s[s.len() - 1] - s[s.len() - 2]) * d[d.len() - 1].abs();
    }
    let s0 = s[0];
    let mut sub = 0.0;
    for sb in subtrahends {
        sub += sb.integral(l, w, t_end)?;
        if s0 > 0.0 {
            sub -= sb.integral(l, w, s0)?;
        }
    }

    let lo = tail.window_fraction * t_end;
    let (ts, tr): (Vec<f64>, Vec<f64>) = s.iter().zip(&r).filter(|(si, _)| **si >= lo).map(|(a, b)| (*a, *b)).unzip();
    if ts.len() < MIN_TAIL_SAMPLES {
        return Err(Error::WindowTooShort(ts.len(), MIN_TAIL_SAMPLES));
    }
    let (e1, e2) = (tail.leading, tail.leading - 0.5);
    let tail_int = |e: f64, c: f64| c * t_end / (-e - 1.0);
    let one = fit_one_power(&ts, &tr, e1, t_end);
    let tail1 = tail_int(e1, one);
    let (tail2, b) = match fit_two_powers(&ts, &tr, e1, e2, t_end) {
        Some((a, b)) => (tail_int(e1, a) + tail_int(e2, b), b),
        None => (tail1, 0.0),
    };
    let free = free_slope(&ts, &tr).map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
    let tail_model =
        format!("a*s^{e1}+b*s^{e2} on [{lo:.4}, {t_end:.4}]; tail {tail2:.6e}; b={b:.3e}; free slope {free}");
    Ok(Estimate { value: data - sub + tail2, error: trap_err + (tail2 - tail1).abs(), tail_model })
}

/// Profile moments `m_p(beta)^j = int (-y)^beta I_p^j(1, y) dy`.
pub type ProfileMoments = BTreeMap<(u32, MultiIndex, usize), f64>;

/// `p`-range `n+3 ..= 2n+2` of the self-similar approximants of `I`.
pub fn profile_orders(n: usize) -> std::ops::RangeInclusive<u32> {
    (n as u32 + 3)..=(2 * n as u32 + 2)
}

fn profile_moment(moments: &ProfileMoments, p: u32, beta: &MultiIndex, j: usize) -> Result<f64> {
    moments
        .get(&(p, beta.clone(), j))
        .copied()
        .ok_or_else(|| Error::MissingCoefficient(format!("moment of I_{p} for beta = {beta}, j = {j}")))
}

/// Result of [`renormalized_constant`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Renormalized {
    pub constant: Estimate,
    /// `(exponent of t, coefficient)` of the power terms of the truncated
    /// integral `int_0^t`: from subtracted profiles, `2 t^{(w+2-p)/2} m_p / (w+2-p)`.
    pub powers: Vec<(f64, f64)>,
    /// Coefficient of `log t`.
    pub log: f64,
    /// Constant contributed by the shifted subtrahend, `(-1)^l m d_l`.
    pub log_constant: f64,
}

/// Subtrahends for weight `w = 2l + |beta| >= n+1`: `I_p(s)` for
/// `n+3 <= p <= w+1` and `I_{w+2}(1+s)`.
pub fn renormalization(
    l: u32,
    beta: &MultiIndex,
    j: usize,
    n: usize,
    moments: &ProfileMoments,
) -> Result<Vec<Subtrahend>> {
    let w = 2 * l + beta.order();
    let p_lo = n as u32 + 3;
    if w + 2 < p_lo {
        return Err(Error::InvalidArgument(format!("weight {w} needs no renormalization")));
    }
    let mut subs = Vec::new();
    for p in p_lo..=w + 1 {
        subs.push(Subtrahend { p, moment: profile_moment(moments, p, beta, j)?, shifted: false });
    }
    subs.push(Subtrahend { p: w + 2, moment: profile_moment(moments, w + 2, beta, j)?, shifted: true });
    Ok(subs)
}

/// `D(s) - sum of subtrahends at s`.
pub fn renormalized_integrand(l: u32, beta_order: u32, subtrahends: &[Subtrahend], s: f64, d: f64) -> f64 {
    d - subtrahends.iter().map(|sb| sb.eval(l, beta_order, s)).sum::<f64>()
}

/// Renormalized integrand sampled on the recorded times.
pub fn renormalized_series(
    history: &MomentHistory,
    l: u32,
    beta: &MultiIndex,
    j: usize,
    subtrahends: &[Subtrahend],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (s, d) = integrand_series(history, l, beta, j)?;
    let r = s.iter().zip(&d).map(|(&si, &di)| renormalized_integrand(l, beta.order(), subtrahends, si, di)).collect();
    Ok((s, r))
}

/// Renormalized constant for weight `w = 2l + |beta| >= n+1`.
pub fn renormalized_constant(
    history: &MomentHistory,
    l: u32,
    beta: &MultiIndex,
    j: usize,
    n: usize,
    moments: &ProfileMoments,
) -> Result<Renormalized> {
    let w = 2 * l + beta.order();
    let sign = if l.is_multiple_of(2) { 1.0 } else { -1.0 };
    let subs = renormalization(l, beta, j, n, moments)?;
    let powers = subs
        .iter()
        .filter(|sb| !sb.shifted)
        .map(|sb| {
            let d = (w + 2 - sb.p) as f64;
            (d / 2.0, sign * sb.moment * 2.0 / d)
        })
        .collect();
    let m_top = subs.last().expect("shifted subtrahend").moment;
    let (e1, _) = tail_exponents(l, beta.order(), w + 3);
    let constant = spacetime_moment(history, l, beta, j, &subs, &TailModel::from_exponent(e1))?;
    Ok(Renormalized { constant, powers, log: sign * m_top, log_constant: sign * m_top * log_time_constant(l) })
}

/// Plain space-time moment for weights where the integral converges.
pub fn raw_moment(history: &MomentHistory, l: u32, beta: &MultiIndex, j: usize, n: usize) -> Result<Estimate> {
    let (e1, _) = tail_exponents(l, beta.order(), n as u32 + 3);
    spacetime_moment(history, l, beta, j, &[], &TailModel::from_exponent(e1))
}

/// `int (-1)^l (-y)^beta I_p^j(1, y) dy` from a sampled `I_p(1, .)`.
pub fn log_coefficient(p: u32, l: u32, beta: &MultiIndex, j: usize, i_p_at_one: &Field) -> Result<f64> {
    let n = i_p_at_one.grid().dim();
    if 2 * l + beta.order() + 2 != p || !profile_orders(n).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "log coefficient needs 2l + |beta| = p - 2 and p in {:?}",
            profile_orders(n)
        )));
    }
    let sign = if (l + beta.order()).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * i_p_at_one.moment(beta)?[j])
}
