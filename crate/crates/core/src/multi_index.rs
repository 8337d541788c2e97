use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-index `alpha` in `Z_+^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self(entries)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// Unit index `e_axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, axis: usize) -> u32 {
        self.0[axis]
    }

    /// `|alpha|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `alpha!`, failing on `u128` overflow.
    pub fn factorial(&self) -> Result<f64> {
        let mut acc: u128 = 1;
        for &a in &self.0 {
            for k in 2..=a as u128 {
                acc = acc.checked_mul(k).ok_or_else(|| Error::InvalidArgument(format!("{self}! overflows")))?;
            }
        }
        Ok(acc as f64)
    }

    /// `x^alpha`.
    #[inline]
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).fold(1.0, |acc, (&a, &xi)| acc * xi.powi(a as i32))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn add_unit(&self, axis: usize) -> MultiIndex {
        let mut v = self.0.clone();
        v[axis] += 1;
        MultiIndex(v)
    }

    /// All multi-indices of length `order` in `dim` variables, in descending
    /// lexicographic order (`(2,0), (1,1), (0,2)`).
    pub fn all_of_order(dim: usize, order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; dim];
        fill(&mut out, &mut cur, 0, order);
        out
    }

    /// All multi-indices with `|alpha| <= max_order`, grouped by order.
    pub fn all_up_to(dim: usize, max_order: u32) -> Vec<MultiIndex> {
        (0..=max_order).flat_map(|k| Self::all_of_order(dim, k)).collect()
    }

    /// Compact key such as `"1,0"`, used in JSON maps.
    pub fn key(&self) -> String {
        self.0.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn parse_key(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad multi-index {s:?}: {e}")))?;
        Ok(Self(v))
    }
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, axis: usize, remaining: u32) {
    if axis + 1 == cur.len() {
        cur[axis] = remaining;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in (0..=remaining).rev() {
        cur[axis] = a;
        fill(out, cur, axis + 1, remaining - a);
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

/// `k!` as a float.
pub fn factorial(k: u32) -> f64 {
    (2..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Binomial coefficient as a float.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
