//! Convolution kernels of the mild formulation: derivatives of the heat kernel
//! `G`, of `grad (-Delta)^{-1} G` and of the Riesz pair `R^j R^k G`.
//!
//! Heat-kernel derivatives are evaluated in closed form with Hermite
//! polynomials; the two nonlocal families are sampled on a periodic grid from
//! their Fourier symbols.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::multi_index::{factorial, MultiIndex};
use crate::par;
use crate::spectral::{self, C64};

/// Which kernel a [`KernelSpec`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `G(t, x)`.
    Heat,
    /// Component `i` of `grad (-Delta)^{-1} G`.
    GradInvLaplace { i: usize },
    /// `R^j R^k G`, stored with `j <= k`.
    RieszPair { j: usize, k: usize },
}

/// `d_t^l grad^beta K` for a kernel family `K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub time_derivs: u32,
    pub space_derivs: MultiIndex,
}

/// Largest total derivative order supported by the closed-form evaluators.
pub const MAX_ORDER: u32 = 16;

impl KernelSpec {
    pub fn heat(time_derivs: u32, space_derivs: MultiIndex) -> Self {
        Self { family: KernelFamily::Heat, time_derivs, space_derivs }
    }

    pub fn grad_inv_laplace(i: usize, time_derivs: u32, space_derivs: MultiIndex) -> Self {
        Self { family: KernelFamily::GradInvLaplace { i }, time_derivs, space_derivs }
    }

    pub fn riesz_pair(j: usize, k: usize, time_derivs: u32, space_derivs: MultiIndex) -> Self {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        Self { family: KernelFamily::RieszPair { j, k }, time_derivs, space_derivs }
    }

    pub fn dim(&self) -> usize {
        self.space_derivs.dim()
    }

    pub fn is_nonlocal(&self) -> bool {
        !matches!(self.family, KernelFamily::Heat)
    }

    /// Parabolic weight `2l + |beta|`.
    pub fn weight(&self) -> u32 {
        2 * self.time_derivs + self.space_derivs.order()
    }

    /// Exponent `e` with `lambda^e K(lambda^2 t, lambda x) = K(t, x)`.
    pub fn scaling_exponent(&self) -> i32 {
        let n = self.dim() as i32;
        let w = self.weight() as i32;
        match self.family {
            KernelFamily::Heat | KernelFamily::RieszPair { .. } => n + w,
            KernelFamily::GradInvLaplace { .. } => n - 1 + w,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weight() > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("derivative order of {self:?} too high")));
        }
        let n = self.dim();
        match self.family {
            KernelFamily::GradInvLaplace { i } if i >= n => {
                Err(Error::InvalidArgument(format!("component {i} out of range")))
            }
            KernelFamily::RieszPair { k, .. } if k >= n => {
                Err(Error::InvalidArgument(format!("Riesz index {k} out of range")))
            }
            _ => Ok(()),
        }
    }

    /// Fourier symbol without the time factor `e^{-t|xi|^2}`:
    /// `(-|xi|^2)^l (i xi)^beta` times `1`, `i xi_i/|xi|^2` or `-xi_j xi_k/|xi|^2`.
    pub fn static_symbol(&self, xi: &[f64; 3]) -> C64 {
        let n = self.dim();
        let r2: f64 = xi[..n].iter().map(|v| v * v).sum();
        let mut s = C64::new((-r2).powi(self.time_derivs as i32), 0.0);
        let i = C64::new(0.0, 1.0);
        for (a, &b) in self.space_derivs.entries().iter().enumerate() {
            s *= (i * xi[a]).powu(b);
        }
        match self.family {
            KernelFamily::Heat => s,
            KernelFamily::GradInvLaplace { i: c } => {
                if r2 == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    s * i * (xi[c] / r2)
                }
            }
            KernelFamily::RieszPair { j, k } => {
                if r2 == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    s * (-xi[j] * xi[k] / r2)
                }
            }
        }
    }

    /// Full symbol at time `t`.
    pub fn symbol(&self, t: f64, xi: &[f64; 3]) -> C64 {
        let n = self.dim();
        let r2: f64 = xi[..n].iter().map(|v| v * v).sum();
        self.static_symbol(xi) * (-t * r2).exp()
    }
}

/// `G(t,x) = (4 pi t)^{-n/2} e^{-|x|^2/(4t)}`.
pub fn heat_kernel(t: f64, x: &[f64], n: usize) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(heat_unchecked(t, x, n))
}

#[inline]
fn heat_unchecked(t: f64, x: &[f64], n: usize) -> f64 {
    let r2: f64 = x[..n].iter().map(|v| v * v).sum();
    (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-r2 / (4.0 * t)).exp()
}

/// Physicists' Hermite polynomials `H_0..=H_k` at `z` by the three-term recurrence.
pub fn hermite_all(k: usize, z: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if k >= 1 {
        out[1] = 2.0 * z;
    }
    for m in 2..=k {
        out[m] = 2.0 * z * out[m - 1] - 2.0 * (m - 1) as f64 * out[m - 2];
    }
}

pub fn hermite(k: usize, z: f64) -> f64 {
    let mut buf = vec![0.0; k + 1];
    hermite_all(k, z, &mut buf);
    buf[k]
}

/// Pure space-derivative expansion `Delta^l grad^beta = sum c_gamma grad^{beta + 2 gamma}`.
type Expansion = Arc<Vec<(f64, MultiIndex)>>;

fn laplace_expansion(l: u32, beta: &MultiIndex) -> Expansion {
    static CACHE: OnceLock<RwLock<HashMap<(u32, MultiIndex), Expansion>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (l, beta.clone());
    if let Some(e) = cache.read().expect("expansion cache poisoned").get(&key) {
        return e.clone();
    }
    let n = beta.dim();
    let terms: Vec<(f64, MultiIndex)> = MultiIndex::all_of_order(n, l)
        .into_iter()
        .map(|gamma| {
            let coeff = factorial(l) / gamma.factorial().expect("small multi-index");
            let doubled = MultiIndex::new(gamma.entries().iter().map(|g| 2 * g).collect());
            (coeff, beta.add(&doubled))
        })
        .collect();
    let e = Arc::new(terms);
    cache.write().expect("expansion cache poisoned").insert(key, e.clone());
    e
}

/// `grad^alpha G(t,x) = (-1)^{|alpha|} (4t)^{-|alpha|/2} H_alpha(x/sqrt(4t)) G(t,x)`.
#[inline]
fn heat_space_derivative(t: f64, x: &[f64], alpha: &MultiIndex, hbuf: &mut [f64]) -> f64 {
    let n = alpha.dim();
    let s = (4.0 * t).sqrt();
    let mut prod = 1.0;
    for (a, xa) in x[..n].iter().enumerate() {
        let k = alpha.get(a) as usize;
        hermite_all(k, xa / s, hbuf);
        prod *= hbuf[k];
    }
    let order = alpha.order() as i32;
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    sign * s.powi(-order) * prod * heat_unchecked(t, x, n)
}

/// Closed-form `d_t^l grad^beta G(t, x)` with `d_t^l` reduced to `Delta^l`.
pub fn heat_kernel_derivative(spec: &KernelSpec, t: f64, x: &[f64]) -> Result<f64> {
    if spec.is_nonlocal() {
        return Err(Error::InvalidArgument("closed form exists only for the heat family".into()));
    }
    spec.validate()?;
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let exp = laplace_expansion(spec.time_derivs, &spec.space_derivs);
    let mut hbuf = [0.0; (MAX_ORDER + 1) as usize];
    Ok(exp.iter().map(|(c, alpha)| c * heat_space_derivative(t, x, alpha, &mut hbuf)).sum())
}

/// Closed-form heat-kernel derivative sampled at every node.
pub fn sample_heat_derivative(spec: &KernelSpec, t: f64, grid: &Grid) -> Result<Field> {
    heat_kernel_derivative(spec, t, &[0.0; 3])?;
    let exp = laplace_expansion(spec.time_derivs, &spec.space_derivs);
    let n = grid.dim();
    let values = par::map_range(grid.len(), |k| {
        let x = grid.point(k);
        let mut hbuf = [0.0; (MAX_ORDER + 1) as usize];
        exp.iter().map(|(c, alpha)| c * heat_space_derivative(t, &x[..n], alpha, &mut hbuf)).sum()
    });
    Field::scalar(*grid, values, t)
}

type CacheKey = (KernelSpec, u64, usize, u64, usize);

fn sample_cache() -> &'static RwLock<HashMap<CacheKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

const SAMPLE_CACHE_LIMIT: usize = 64;

/// Samples any kernel spectrally from its symbol on a periodic grid (the
/// periodization of the whole-space kernel, mean-zero for the nonlocal families).
pub fn sample_spectral(spec: &KernelSpec, t: f64, grid: &Grid) -> Result<Field> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    spec.validate()?;
    if spec.dim() != grid.dim() {
        return Err(Error::ShapeMismatch("kernel and grid dimensions differ".into()));
    }
    let key = (spec.clone(), t.to_bits(), grid.dim(), grid.half_extent().to_bits(), grid.points());
    if let Some(v) = sample_cache().read().expect("kernel cache poisoned").get(&key) {
        return Field::scalar(*grid, v.as_ref().clone(), t);
    }
    let values = spectral::sample_from_symbol(grid, |xi| spec.symbol(t, xi));
    {
        let mut cache = sample_cache().write().expect("kernel cache poisoned");
        if cache.len() >= SAMPLE_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::new(values.clone()));
    }
    Field::scalar(*grid, values, t)
}

/// Samples a nonlocal kernel (`grad_inv_laplace` or `riesz_pair`) on the grid.
pub fn sample_nonlocal_kernel(spec: &KernelSpec, t: f64, grid: &Grid) -> Result<Field> {
    if !spec.is_nonlocal() {
        return Err(Error::InvalidArgument("heat kernels are sampled in closed form".into()));
    }
    sample_spectral(spec, t, grid)
}

/// Heat family in closed form, nonlocal families spectrally.
pub fn sample_kernel(spec: &KernelSpec, t: f64, grid: &Grid) -> Result<Field> {
    if spec.is_nonlocal() {
        sample_nonlocal_kernel(spec, t, grid)
    } else {
        sample_heat_derivative(spec, t, grid)
    }
}

/// Default decay power of the weighted bound `(1+|x|)^p |K(1,x)|`.
pub fn default_envelope_power(spec: &KernelSpec) -> f64 {
    let n = spec.dim() as f64;
    let w = spec.weight() as f64;
    match spec.family {
        KernelFamily::GradInvLaplace { .. } => n - 1.0 + w,
        KernelFamily::Heat | KernelFamily::RieszPair { .. } => n + w,
    }
}

/// `sup_{interior} (1+|x|)^power |K(1, x)|`.
pub fn kernel_decay_envelope(spec: &KernelSpec, grid: &Grid, power: Option<f64>) -> Result<f64> {
    let p = power.unwrap_or_else(|| default_envelope_power(spec));
    let f = sample_kernel(spec, 1.0, grid)?;
    let vals = f.component(0);
    let n = grid.dim();
    Ok(par::max_range(grid.len(), |k| {
        if !grid.is_interior(k) {
            return 0.0;
        }
        let x = grid.point(k);
        let r = x[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        (1.0 + r).powf(p) * vals[k].abs()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn heat_kernel_values() {
        let g0 = heat_kernel(1.0, &[0.0, 0.0], 2).unwrap();
        assert!((g0 - 1.0 / (4.0 * PI)).abs() < 1e-16);
        let g = heat_kernel(1.0, &[2.0, 0.0], 2).unwrap();
        assert!((g - (-1.0f64).exp() / (4.0 * PI)).abs() < 1e-16);
        let lam: f64 = 3.0;
        let lhs = lam * lam * heat_kernel(lam * lam, &[lam, lam], 2).unwrap();
        let rhs = heat_kernel(1.0, &[1.0, 1.0], 2).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
        assert!(heat_kernel(0.0, &[0.0], 1).is_err());
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert_eq!(hermite(2, 0.0), -2.0);
        assert!((hermite(3, 0.5) - (8.0 * 0.125 - 12.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn first_and_second_derivatives() {
        let x = [0.7, -0.4];
        let d1 = heat_kernel_derivative(&KernelSpec::heat(0, mi(&[1, 0])), 1.0, &x).unwrap();
        assert!((d1 + x[0] / 2.0 * heat_kernel(1.0, &x, 2).unwrap()).abs() < 1e-15);
        let d2 = heat_kernel_derivative(&KernelSpec::heat(0, mi(&[2, 0])), 1.0, &[0.0, 0.0]).unwrap();
        assert!((d2 + 1.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn time_derivative_is_laplacian() {
        let x = [1.0, 0.0];
        let lap = heat_kernel_derivative(&KernelSpec::heat(1, mi(&[0, 0])), 1.0, &x).unwrap();
        let dt = 1e-4;
        let fd = (heat_kernel(1.0 + dt, &x, 2).unwrap() - heat_kernel(1.0 - dt, &x, 2).unwrap()) / (2.0 * dt);
        assert!(((lap - fd) / lap).abs() < 1e-7);
    }

    #[test]
    fn riesz_pair_is_canonical() {
        let a = KernelSpec::riesz_pair(1, 0, 0, mi(&[0, 0]));
        let b = KernelSpec::riesz_pair(0, 1, 0, mi(&[0, 0]));
        assert_eq!(a, b);
    }

    #[test]
    fn grad_inv_laplace_parity() {
        let g = Grid::make(2, 16.0, 128).unwrap();
        let f = sample_nonlocal_kernel(&KernelSpec::grad_inv_laplace(0, 0, mi(&[0, 0])), 1.0, &g).unwrap();
        let v = f.component(0);
        let n = g.points();
        let mut worst: f64 = 0.0;
        for i in 1..n {
            for j in 1..n {
                let a = v[g.ravel(&[i, j])];
                let odd = v[g.ravel(&[n - i, j])];
                let even = v[g.ravel(&[i, n - j])];
                worst = worst.max((a + odd).abs()).max((a - even).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn riesz_trace_is_minus_identity() {
        let g = Grid::make(2, 16.0, 256).unwrap();
        let t = 1.0;
        let a = sample_nonlocal_kernel(&KernelSpec::riesz_pair(0, 0, 0, mi(&[0, 0])), t, &g).unwrap();
        let b = sample_nonlocal_kernel(&KernelSpec::riesz_pair(1, 1, 0, mi(&[0, 0])), t, &g).unwrap();
        let sum = a.add(&b).unwrap();
        let exact = Field::from_fn(g, t, |x| -heat_kernel(t, &x[..2], 2).unwrap()).unwrap();
        // the zero mode is removed, so compare up to the mean of G over the box
        let shift = 1.0 / (4.0 * g.half_extent() * g.half_extent());
        let shifted = Field::from_fn(g, t, |x| -heat_kernel(t, &x[..2], 2).unwrap() + shift).unwrap();
        let err = sum.max_abs_diff(&shifted, true).unwrap();
        assert!(err < 1e-8, "{err}");
        assert!(sum.max_abs_diff(&exact, true).unwrap() < 1e-2);
    }

    #[test]
    fn nonlocal_kernels_have_zero_mean() {
        let g = Grid::make(2, 8.0, 64).unwrap();
        let f = sample_nonlocal_kernel(&KernelSpec::riesz_pair(0, 1, 0, mi(&[0, 0])), 0.5, &g).unwrap();
        assert!(f.integral()[0].abs() < 1e-14);
    }
}
