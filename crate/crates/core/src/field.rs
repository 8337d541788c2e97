use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::multi_index::MultiIndex;
use crate::par;
use crate::spectral::{self, C64};

/// Tensor rank of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Scalar,
    Vector,
    Tensor,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Tensor => dim * dim,
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Tensor => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::Tensor),
            _ => None,
        }
    }
}

/// Samples of a scalar, vector or tensor field on a grid at time `t`.
///
/// Components are stored one after the other, each row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    rank: Rank,
    values: Vec<f64>,
    time: f64,
}

/// Output of [`Field::rescale`].
#[derive(Debug, Clone)]
pub struct Rescaled {
    pub field: Field,
    /// Set when some query point fell outside the source box and was taken as 0.
    pub truncated: bool,
}

impl Field {
    pub fn new(grid: Grid, rank: Rank, values: Vec<f64>, time: f64) -> Result<Self> {
        let expected = grid.len() * rank.components(grid.dim());
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {:?} field on {} nodes",
                values.len(),
                rank,
                grid.len()
            )));
        }
        if !(time >= 0.0) || !time.is_finite() {
            return Err(Error::InvalidArgument(format!("field time must be >= 0, got {time}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {pos}")));
        }
        Ok(Self { grid, rank, values, time })
    }

    pub fn zeros(grid: Grid, rank: Rank, time: f64) -> Self {
        let len = grid.len() * rank.components(grid.dim());
        Self { grid, rank, values: vec![0.0; len], time }
    }

    pub fn scalar(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        Self::new(grid, Rank::Scalar, values, time)
    }

    pub fn vector(grid: Grid, components: Vec<Vec<f64>>, time: f64) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!("{} components for a {}-d vector", components.len(), grid.dim())));
        }
        Self::new(grid, Rank::Vector, components.concat(), time)
    }

    /// Samples `f(x)` at every node (scalar).
    pub fn from_fn<F>(grid: Grid, time: f64, f: F) -> Result<Self>
    where
        F: Fn(&[f64; 3]) -> f64 + Send + Sync,
    {
        let values = par::map_range(grid.len(), |k| f(&grid.point(k)));
        Self::scalar(grid, values, time)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_components(&self) -> usize {
        self.rank.components(self.grid.dim())
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.values[c * len..(c + 1) * len]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.grid.len();
        &mut self.values[c * len..(c + 1) * len]
    }

    /// Component `c` as a scalar field.
    pub fn component_field(&self, c: usize) -> Field {
        Field { grid: self.grid, rank: Rank::Scalar, values: self.component(c).to_vec(), time: self.time }
    }

    /// Euclidean magnitude of all components at node `k`.
    #[inline]
    pub fn magnitude_at(&self, k: usize) -> f64 {
        if self.rank == Rank::Scalar {
            return self.values[k].abs();
        }
        let len = self.grid.len();
        (0..self.n_components()).map(|c| self.values[c * len + k].powi(2)).sum::<f64>().sqrt()
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.rank != other.rank {
            return Err(Error::ShapeMismatch(format!(
                "{:?} on {:?} vs {:?} on {:?}",
                self.rank, self.grid, other.rank, other.grid
            )));
        }
        Ok(())
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + scale * b).collect();
        Ok(self.like(values))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.like(self.values.iter().map(|v| c * v).collect())
    }

    /// Same grid, rank and time with new samples.
    fn like(&self, values: Vec<f64>) -> Field {
        Field { grid: self.grid, rank: self.rank, values, time: self.time }
    }

    /// Rectangle-rule `L^q` norm; `q = f64::INFINITY` gives the max magnitude.
    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        self.lq_norm_masked(q, false)
    }

    /// `L^q` norm restricted to the half-box interior `|x_i| < L/2`.
    pub fn lq_norm_interior(&self, q: f64) -> Result<f64> {
        self.lq_norm_masked(q, true)
    }

    fn lq_norm_masked(&self, q: f64, interior: bool) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::InvalidArgument(format!("q must be >= 1, got {q}")));
        }
        let grid = self.grid;
        let keep = |k: usize| !interior || grid.is_interior(k);
        if q.is_infinite() {
            return Ok(par::max_range(grid.len(), |k| if keep(k) { self.magnitude_at(k) } else { 0.0 }));
        }
        let sum = par::sum_range(grid.len(), |k| {
            if keep(k) {
                let m = self.magnitude_at(k);
                if q == 1.0 {
                    m
                } else if q == 2.0 {
                    m * m
                } else {
                    m.powf(q)
                }
            } else {
                0.0
            }
        });
        Ok((sum * grid.cell_volume()).powf(1.0 / q))
    }

    /// Rectangle-rule `\int x^alpha f dx`, one value per component.
    pub fn moment(&self, alpha: &MultiIndex) -> Result<Vec<f64>> {
        if alpha.dim() != self.grid.dim() {
            return Err(Error::ShapeMismatch(format!("{alpha} in dimension {}", self.grid.dim())));
        }
        let grid = self.grid;
        let vol = grid.cell_volume();
        Ok((0..self.n_components())
            .map(|c| {
                let comp = self.component(c);
                vol * par::sum_range(grid.len(), |k| {
                    let x = grid.point(k);
                    alpha.monomial(&x[..grid.dim()]) * comp[k]
                })
            })
            .collect())
    }

    /// Plain integral of each component.
    pub fn integral(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        (0..self.n_components())
            .map(|c| {
                let comp = self.component(c);
                vol * par::sum_range(comp.len(), |k| comp[k])
            })
            .collect()
    }

    /// Interpolates `f` at an arbitrary point with tensor-product 4-point
    /// Lagrange stencils (periodic wrap inside the box). Returns `None` when the
    /// point lies outside `[-L, L)^n`.
    pub fn interpolate(&self, c: usize, x: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let (h, l, n) = (g.spacing(), g.half_extent(), g.points() as i64);
        let dim = g.dim();
        let mut base = [0i64; 3];
        let mut w = [[0.0f64; 4]; 3];
        for a in 0..dim {
            if x[a] < -l || x[a] >= l {
                return None;
            }
            let s = (x[a] + l) / h;
            let i0 = s.floor();
            let u = s - i0;
            base[a] = i0 as i64;
            w[a] = [
                -u * (u - 1.0) * (u - 2.0) / 6.0,
                (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
                -(u + 1.0) * u * (u - 2.0) / 2.0,
                (u + 1.0) * u * (u - 1.0) / 6.0,
            ];
        }
        let comp = self.component(c);
        let stencil = 4usize.pow(dim as u32);
        let mut acc = 0.0;
        for s in 0..stencil {
            let mut weight = 1.0;
            let mut idx = [0usize; 3];
            let mut rem = s;
            for a in 0..dim {
                let o = (rem % 4) as i64;
                rem /= 4;
                weight *= w[a][o as usize];
                idx[a] = (base[a] - 1 + o).rem_euclid(n) as usize;
            }
            acc += weight * comp[g.ravel(&idx)];
        }
        Some(acc)
    }

    /// Parabolic rescaling `xi -> t^{(n+m)/2} f(t, sqrt(t) xi)` onto `reference`.
    ///
    /// A profile with the order-`m` scaling maps to a `t`-independent field.
    pub fn rescale(&self, m: i32, reference: &Grid) -> Result<Rescaled> {
        let t = self.time;
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        if reference.dim() != self.grid.dim() {
            return Err(Error::ShapeMismatch("reference grid dimension differs".into()));
        }
        let dim = self.grid.dim();
        let root = t.sqrt();
        let factor = t.powf((dim as f64 + m as f64) / 2.0);
        let ncomp = self.n_components();
        let mut truncated = false;
        let mut values = Vec::with_capacity(reference.len() * ncomp);
        for c in 0..ncomp {
            let col = par::map_range(reference.len(), |k| {
                let xi = reference.point(k);
                let mut x = [0.0; 3];
                for a in 0..dim {
                    x[a] = root * xi[a];
                }
                self.interpolate(c, &x).map(|v| factor * v)
            });
            for v in col {
                match v {
                    Some(v) => values.push(v),
                    None => {
                        truncated = true;
                        values.push(0.0);
                    }
                }
            }
        }
        if truncated {
            log::warn!("rescale at t = {t}: query points outside the box were taken as 0");
        }
        Ok(Rescaled { field: Field::new(*reference, self.rank, values, 1.0)?, truncated })
    }

    /// Spectral divergence `sum_j d_j f^j` of a vector field.
    pub fn divergence(&self) -> Result<Field> {
        if self.rank != Rank::Vector {
            return Err(Error::ShapeMismatch(format!("divergence of a {:?} field", self.rank)));
        }
        let grid = self.grid;
        let tab = spectral::table(&grid);
        let mut total = vec![C64::new(0.0, 0.0); grid.len()];
        for j in 0..grid.dim() {
            let spec = spectral::fft_real(&grid, self.component(j));
            par::for_each_mut(&mut total, |k, v| {
                if !tab.nyquist[k] {
                    *v += C64::new(0.0, tab.xi[k][j]) * spec[k];
                }
            });
        }
        Field::scalar(grid, spectral::ifft_real(&grid, &total), self.time)
    }

    /// Spectral partial derivative of every component along `axis`.
    pub fn partial(&self, axis: usize) -> Field {
        let grid = self.grid;
        let values = (0..self.n_components())
            .flat_map(|c| spectral::apply_multiplier(&grid, self.component(c), |xi| C64::new(0.0, xi[axis])))
            .collect();
        self.like(values)
    }

    /// Largest absolute difference over all samples (optionally interior only).
    pub fn max_abs_diff(&self, other: &Field, interior: bool) -> Result<f64> {
        self.check_compatible(other)?;
        let len = self.grid.len();
        Ok((0..self.n_components())
            .map(|c| {
                let (a, b) = (self.component(c), other.component(c));
                par::max_range(len, |k| if interior && !self.grid.is_interior(k) { 0.0 } else { (a[k] - b[k]).abs() })
            })
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self, interior: bool) -> f64 {
        let len = self.grid.len();
        (0..self.n_components())
            .map(|c| {
                let a = self.component(c);
                par::max_range(len, |k| if interior && !self.grid.is_interior(k) { 0.0 } else { a[k].abs() })
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn heat(t: f64, x: &[f64; 3], n: usize) -> f64 {
        let r2: f64 = x[..n].iter().map(|v| v * v).sum();
        (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-r2 / (4.0 * t)).exp()
    }

    #[test]
    fn constant_field_l1_is_area() {
        let g = Grid::make(2, 1.0, 8).unwrap();
        let f = Field::from_fn(g, 0.0, |_| 1.0).unwrap();
        assert!((f.lq_norm(1.0).unwrap() - 4.0).abs() < 1e-14);
        assert!(f.lq_norm(0.5).is_err());
    }

    #[test]
    fn sup_norm_is_max_magnitude() {
        let g = Grid::make(1, 1.0, 8).unwrap();
        let f = Field::from_fn(g, 0.0, |x| x[0] * 3.0).unwrap();
        assert_eq!(f.lq_norm(f64::INFINITY).unwrap(), 3.0);
    }

    #[test]
    fn gaussian_mass_and_second_moment() {
        let g = Grid::make(2, 16.0, 256).unwrap();
        let f = Field::from_fn(g, 1.0, |x| heat(1.0, x, 2)).unwrap();
        assert!((f.lq_norm(1.0).unwrap() - 1.0).abs() < 1e-8);
        let m = f.moment(&MultiIndex::new(vec![2, 0])).unwrap()[0];
        assert!((m - 2.0).abs() < 1e-8, "{m}");
    }

    #[test]
    fn hessian_of_gaussian_moments() {
        // f = d1 d2 exp(-|x|^2) = 4 x1 x2 exp(-|x|^2)
        let g = Grid::make(2, 16.0, 256).unwrap();
        let f = Field::from_fn(g, 0.0, |x| 4.0 * x[0] * x[1] * (-(x[0] * x[0] + x[1] * x[1])).exp()).unwrap();
        assert!(f.moment(&MultiIndex::zero(2)).unwrap()[0].abs() < 1e-10);
        let m11 = f.moment(&MultiIndex::new(vec![1, 1])).unwrap()[0];
        assert!((m11 - PI).abs() < 1e-6);
    }

    #[test]
    fn rescale_heat_kernel_is_time_independent() {
        let g = Grid::make(2, 16.0, 256).unwrap();
        let reference = Grid::make(2, 4.0, 64).unwrap();
        let target = Field::from_fn(reference, 1.0, |x| heat(1.0, x, 2)).unwrap();
        for t in [1.0, 2.0, 3.0] {
            let f = Field::from_fn(g, t, |x| heat(t, x, 2)).unwrap();
            let r = f.rescale(0, &reference).unwrap();
            assert!(!r.truncated);
            let e = r.field.max_abs_diff(&target, false).unwrap();
            assert!(e < 1e-6, "t = {t}: {e:e}");
        }
    }

    #[test]
    fn rescale_derivative_and_constant() {
        let g = Grid::make(2, 16.0, 256).unwrap();
        let reference = Grid::make(2, 4.0, 64).unwrap();
        let d1 = |t: f64, x: &[f64; 3]| -x[0] / (2.0 * t) * heat(t, x, 2);
        let target = Field::from_fn(reference, 1.0, |x| d1(1.0, x)).unwrap();
        let f = Field::from_fn(g, 2.5, |x| d1(2.5, x)).unwrap();
        let r = f.rescale(1, &reference).unwrap();
        assert!(r.field.max_abs_diff(&target, false).unwrap() < 1e-6);

        let one = Field::from_fn(g, 4.0, |_| 1.0).unwrap();
        let r = one.rescale(1, &reference).unwrap();
        assert!(r.field.values().iter().all(|v| (v - 8.0).abs() < 1e-12));
        assert!(one.with_time(0.0).rescale(1, &reference).is_err());
    }

    #[test]
    fn rescale_flags_truncation() {
        let g = Grid::make(2, 4.0, 32).unwrap();
        let reference = Grid::make(2, 4.0, 16).unwrap();
        let f = Field::from_fn(g, 4.0, |x| heat(4.0, x, 2)).unwrap();
        assert!(f.rescale(0, &reference).unwrap().truncated);
    }

    #[test]
    fn divergence_of_rotational_field_vanishes() {
        let g = Grid::make(2, 16.0, 128).unwrap();
        let gauss = |x: &[f64; 3]| (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
        let u1: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.point(k);
                x[1] * gauss(&x)
            })
            .collect();
        let u2: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.point(k);
                -x[0] * gauss(&x)
            })
            .collect();
        let u = Field::vector(g, vec![u1.clone(), u2], 0.0).unwrap();
        let d = u.divergence().unwrap();
        assert!(d.max_abs(false) < 1e-8 * u.max_abs(false));

        // d1(x1 g) = (1 - x1^2) g
        let v = Field::vector(
            g,
            vec![
                (0..g.len())
                    .map(|k| {
                        let x = g.point(k);
                        x[0] * gauss(&x)
                    })
                    .collect(),
                vec![0.0; g.len()],
            ],
            0.0,
        )
        .unwrap();
        let d = v.divergence().unwrap();
        let exact = Field::from_fn(g, 0.0, |x| (1.0 - x[0] * x[0]) * gauss(x)).unwrap();
        assert!(d.max_abs_diff(&exact, false).unwrap() < 1e-6);

        let zero = Field::zeros(g, Rank::Vector, 0.0);
        assert_eq!(zero.divergence().unwrap().max_abs(false), 0.0);
        assert!(Field::zeros(g, Rank::Scalar, 0.0).divergence().is_err());
    }

    #[test]
    fn double_rescale_composes() {
        // rescale at t1 of G(t1 t2) gives G(t2) on the reference; rescaling that again
        // (at t2) gives G(1).
        let g = Grid::make(2, 24.0, 384).unwrap();
        let mid = Grid::make(2, 12.0, 192).unwrap();
        let reference = Grid::make(2, 4.0, 64).unwrap();
        let (t1, t2) = (2.0, 1.5);
        let f = Field::from_fn(g, t1 * t2, |x| heat(t1 * t2, x, 2)).unwrap();
        let once = f.clone().with_time(t1).rescale(0, &mid).unwrap().field.with_time(t2);
        let twice = once.rescale(0, &reference).unwrap().field;
        let direct = f.rescale(0, &reference).unwrap().field;
        assert!(twice.max_abs_diff(&direct, false).unwrap() < 1e-6);
    }
}
