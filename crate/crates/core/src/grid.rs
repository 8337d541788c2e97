use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic sampling of the box `[-L, L)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_extent: f64,
    points: usize,
}

impl Grid {
    /// Builds a grid, rejecting odd or too-small `points`, nonpositive `half_extent`
    /// and dimensions outside `1..=3`.
    pub fn new(dim: usize, half_extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("unsupported dimension {dim}")));
        }
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::InvalidGrid(format!("half extent must be positive, got {half_extent}")));
        }
        if !points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("points per dimension must be even, got {points}")));
        }
        if points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {points}")));
        }
        Ok(Self { dim, half_extent, points })
    }

    /// Same as [`Grid::new`] but also enforces the solver minimum `N >= 8`.
    pub fn make(dim: usize, half_extent: f64, points: usize) -> Result<Self> {
        let g = Self::new(dim, half_extent, points)?;
        if points < 8 {
            return Err(Error::InvalidGrid(format!("need N >= 8, got {points}")));
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points as f64
    }

    /// Volume element `h^n` of the rectangle rule.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of nodes `N^n`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node index `i` along one axis.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing()
    }

    /// Splits a flat row-major index into per-axis indices (axis 0 slowest).
    #[inline]
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.points;
            flat /= self.points;
        }
        idx
    }

    #[inline]
    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.dim).fold(0, |acc, &i| acc * self.points + i)
    }

    /// Coordinates of the node with flat index `flat`; unused axes are zero.
    #[inline]
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.node(idx[a]);
        }
        x
    }

    /// True when every coordinate lies strictly inside the half-box `|x_i| < L/2`.
    #[inline]
    pub fn is_interior(&self, flat: usize) -> bool {
        let x = self.point(flat);
        x.iter().take(self.dim).all(|c| c.abs() < 0.5 * self.half_extent)
    }

    /// Signed integer frequency of FFT index `i` (Nyquist maps to `-N/2`).
    #[inline]
    pub fn frequency_index(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Angular wavenumber `pi m / L` of FFT index `i` along one axis.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        std::f64::consts::PI * self.frequency_index(i) as f64 / self.half_extent
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.points / 2
    }

    /// Grid with every length multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        Self::new(self.dim, self.half_extent * factor, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_first_node() {
        let g = Grid::make(2, 16.0, 8).unwrap();
        assert_eq!(g.spacing(), 4.0);
        assert_eq!(g.point(0), [-16.0, -16.0, 0.0]);
        assert_eq!(g.spacing() * g.points() as f64, 2.0 * g.half_extent());
    }

    #[test]
    fn smallest_grid() {
        let g = Grid::new(1, 1.0, 2).unwrap();
        assert_eq!(g.node(0), -1.0);
        assert_eq!(g.node(1), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::make(2, 16.0, 7).is_err());
        assert!(Grid::make(2, 0.0, 8).is_err());
        assert!(Grid::make(2, -1.0, 8).is_err());
        assert!(Grid::make(4, 1.0, 8).is_err());
        assert!(Grid::make(2, 1.0, 6).is_err());
    }

    #[test]
    fn ravel_roundtrip() {
        let g = Grid::make(3, 2.0, 8).unwrap();
        for flat in [0, 1, 17, 300, 511] {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
        }
    }

    #[test]
    fn frequencies() {
        let g = Grid::make(1, std::f64::consts::PI, 8).unwrap();
        let m: Vec<i64> = (0..8).map(|i| g.frequency_index(i)).collect();
        assert_eq!(m, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert!((g.wavenumber(1) - 1.0).abs() < 1e-15);
    }
}
