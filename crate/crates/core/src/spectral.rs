//! N-dimensional FFTs on a [`Grid`] and conversions between grid samples and
//! samples of the continuum Fourier transform `f^(xi) = \int f(x) e^{-i x.xi} dx`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;
use crate::par;

pub type C64 = Complex64;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(p) = cache.read().expect("fft plan cache poisoned").get(&n) {
        return p.clone();
    }
    let mut planner = FftPlanner::new();
    let p = Arc::new(Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) });
    cache.write().expect("fft plan cache poisoned").entry(n).or_insert(p).clone()
}

const TILE: usize = 32;

/// Moves the last axis of a `[rows, n]` row-major block to the front, by tiles.
fn rotate_axes(data: &[C64], out: &mut [C64], n: usize) {
    let rows = data.len() / n;
    par::for_each_chunk_mut(out, TILE.min(n) * rows, |b, block| {
        let j0 = b * TILE.min(n);
        let width = block.len() / rows;
        for i0 in (0..rows).step_by(TILE) {
            let i1 = (i0 + TILE).min(rows);
            for dj in 0..width {
                let src = j0 + dj;
                let dst = &mut block[dj * rows..(dj + 1) * rows];
                for i in i0..i1 {
                    dst[i] = data[i * n + src];
                }
            }
        }
    });
}

/// Lines handed to one FFT call.
const LINES_PER_TASK: usize = 16;

fn transform(grid: &Grid, data: &mut Vec<C64>, inverse: bool) {
    let n = grid.points();
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let scratch_len = fft.get_inplace_scratch_len();
    let mut tmp = vec![C64::new(0.0, 0.0); data.len()];
    for _ in 0..grid.dim() {
        par::for_each_chunk_mut(data, n * LINES_PER_TASK, |_, lines| {
            let mut scratch = vec![C64::new(0.0, 0.0); scratch_len];
            fft.process_with_scratch(lines, &mut scratch);
        });
        rotate_axes(data, &mut tmp, n);
        std::mem::swap(data, &mut tmp);
    }
    if inverse {
        let scale = 1.0 / data.len() as f64;
        par::for_each_mut(data, |_, v| *v *= scale);
    }
}

/// Unnormalized forward DFT over all axes.
pub fn fft(grid: &Grid, data: &mut Vec<C64>) {
    transform(grid, data, false);
}

/// Inverse DFT over all axes, normalized by `1/N^n`.
pub fn ifft(grid: &Grid, data: &mut Vec<C64>) {
    transform(grid, data, true);
}

/// DFT of a real sample vector.
pub fn fft_real(grid: &Grid, values: &[f64]) -> Vec<C64> {
    let mut data: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft(grid, &mut data);
    data
}

/// Real part of the inverse DFT.
pub fn ifft_real(grid: &Grid, spectrum: &[C64]) -> Vec<f64> {
    let mut data = spectrum.to_vec();
    ifft(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// Inverse DFT of two Hermitian spectra in a single complex transform.
pub fn ifft_real_pair(grid: &Grid, a: &[C64], b: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let i = C64::new(0.0, 1.0);
    let mut data: Vec<C64> = a.iter().zip(b).map(|(&x, &y)| x + i * y).collect();
    ifft(grid, &mut data);
    data.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Forward DFT of two real fields in a single complex transform.
pub fn fft_real_pair(grid: &Grid, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
    let mut data: Vec<C64> = a.iter().zip(b).map(|(&x, &y)| C64::new(x, y)).collect();
    fft(grid, &mut data);
    let tab = table(grid);
    par::map_range(data.len(), |k| {
        let z = data[k];
        let zm = data[tab.mirror[k] as usize].conj();
        ((z + zm) * 0.5, (z - zm) * C64::new(0.0, -0.5))
    })
    .into_iter()
    .unzip()
}

/// Per-grid spectral bookkeeping, computed once and shared.
#[derive(Debug)]
pub struct SpectralTable {
    /// Wavevector of every spectral index (unused axes zero).
    pub xi: Vec<[f64; 3]>,
    /// `|xi|^2`.
    pub r2: Vec<f64>,
    /// Any axis at the Nyquist frequency.
    pub nyquist: Vec<bool>,
    /// `(-1)^{sum m}`.
    pub phase: Vec<f64>,
    /// Flat index of `-m`.
    pub mirror: Vec<u32>,
    /// `max_a |m_a|`.
    pub max_freq: Vec<u32>,
}

type TableKey = (usize, u64, usize);

/// Shared [`SpectralTable`] for `grid`.
pub fn table(grid: &Grid) -> Arc<SpectralTable> {
    static CACHE: OnceLock<RwLock<HashMap<TableKey, Arc<SpectralTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (grid.dim(), grid.half_extent().to_bits(), grid.points());
    if let Some(t) = cache.read().expect("spectral table cache poisoned").get(&key) {
        return t.clone();
    }
    let len = grid.len();
    let xi = par::map_range(len, |k| wavevector(grid, k));
    let t = Arc::new(SpectralTable {
        r2: xi.iter().map(|x| x.iter().map(|v| v * v).sum()).collect(),
        xi,
        nyquist: par::map_range(len, |k| touches_nyquist(grid, k)),
        phase: par::map_range(len, |k| origin_phase(grid, k)),
        mirror: par::map_range(len, |k| mirror_index(grid, k) as u32),
        max_freq: par::map_range(len, |k| {
            let idx = grid.unravel(k);
            (0..grid.dim()).map(|a| grid.frequency_index(idx[a]).unsigned_abs() as u32).max().unwrap_or(0)
        }),
    });
    let mut cache = cache.write().expect("spectral table cache poisoned");
    if cache.len() >= 16 {
        cache.clear();
    }
    cache.entry(key).or_insert(t).clone()
}

/// Real-to-complex transform of a two-dimensional grid.
///
/// The half spectrum is stored transposed: entry `j * n + i` holds frequency
/// index `i` along axis 0 and `j in 0..=n/2` along axis 1.
pub struct RealFft2 {
    n: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    plans: Arc<Plans>,
    /// Wavevector per half-spectrum entry.
    pub xi: Vec<[f64; 2]>,
    pub r2: Vec<f64>,
    pub nyquist: Vec<bool>,
    pub max_freq: Vec<u32>,
}

impl RealFft2 {
    pub fn new(grid: &Grid) -> Self {
        assert_eq!(grid.dim(), 2, "RealFft2 needs a two-dimensional grid");
        let n = grid.points();
        let half = n / 2 + 1;
        let mut planner = RealFftPlanner::<f64>::new();
        let len = n * half;
        let idx = |q: usize| (q % n, q / n);
        let xi: Vec<[f64; 2]> = (0..len)
            .map(|q| {
                let (i, j) = idx(q);
                [grid.wavenumber(i), grid.wavenumber(j)]
            })
            .collect();
        Self {
            n,
            half,
            r2c: planner.plan_fft_forward(n),
            c2r: planner.plan_fft_inverse(n),
            plans: plans(n),
            r2: xi.iter().map(|x| x[0] * x[0] + x[1] * x[1]).collect(),
            xi,
            nyquist: (0..len)
                .map(|q| {
                    let (i, j) = idx(q);
                    grid.is_nyquist(i) || grid.is_nyquist(j)
                })
                .collect(),
            max_freq: (0..len)
                .map(|q| {
                    let (i, j) = idx(q);
                    grid.frequency_index(i).unsigned_abs().max(grid.frequency_index(j).unsigned_abs()) as u32
                })
                .collect(),
        }
    }

    /// Number of stored spectral entries.
    pub fn len(&self) -> usize {
        self.n * self.half
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<C64> {
        let (n, half) = (self.n, self.half);
        let mut rows = vec![C64::new(0.0, 0.0); n * half];
        let mut input = values.to_vec();
        let r2c = &self.r2c;
        par::for_each_chunk_mut(&mut rows, half, |i, out| {
            let mut line = input_line(&input, i, n);
            r2c.process(&mut line, out).expect("row lengths match the plan");
        });
        input.clear();
        let mut cols = vec![C64::new(0.0, 0.0); n * half];
        rotate_axes(&rows, &mut cols, half);
        let fft = &self.plans.forward;
        par::for_each_chunk_mut(&mut cols, n * LINES_PER_TASK, |_, lines| {
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(lines, &mut scratch);
        });
        cols
    }

    /// Inverse transform normalized by `1/n^2`; the imaginary parts of the
    /// self-conjugate columns are discarded.
    pub fn inverse(&self, spectrum: &[C64]) -> Vec<f64> {
        let (n, half) = (self.n, self.half);
        let mut cols = spectrum.to_vec();
        let fft = &self.plans.inverse;
        par::for_each_chunk_mut(&mut cols, n * LINES_PER_TASK, |_, lines| {
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(lines, &mut scratch);
        });
        let mut rows = vec![C64::new(0.0, 0.0); n * half];
        rotate_axes(&cols, &mut rows, n);
        let mut out = vec![0.0; n * n];
        let c2r = &self.c2r;
        let scale = 1.0 / (n * n) as f64;
        par::for_each_chunk_mut(&mut out, n, |i, line| {
            let mut spec = rows[i * half..(i + 1) * half].to_vec();
            spec[0].im = 0.0;
            spec[half - 1].im = 0.0;
            c2r.process(&mut spec, line).expect("row lengths match the plan");
            for v in line.iter_mut() {
                *v *= scale;
            }
        });
        out
    }
}

fn input_line(values: &[f64], i: usize, n: usize) -> Vec<f64> {
    values[i * n..(i + 1) * n].to_vec()
}

/// Flat index of the frequency `-m` for the frequency at `flat`.
#[inline]
pub fn mirror_index(grid: &Grid, flat: usize) -> usize {
    let n = grid.points();
    let idx = grid.unravel(flat);
    let mut m = [0usize; 3];
    for a in 0..grid.dim() {
        m[a] = (n - idx[a]) % n;
    }
    grid.ravel(&m)
}

/// Wavevector of spectral index `flat`; unused axes are zero.
#[inline]
pub fn wavevector(grid: &Grid, flat: usize) -> [f64; 3] {
    let idx = grid.unravel(flat);
    let mut k = [0.0; 3];
    for a in 0..grid.dim() {
        k[a] = grid.wavenumber(idx[a]);
    }
    k
}

/// True if any axis of spectral index `flat` sits at the Nyquist frequency.
#[inline]
pub fn touches_nyquist(grid: &Grid, flat: usize) -> bool {
    let idx = grid.unravel(flat);
    (0..grid.dim()).any(|a| grid.is_nyquist(idx[a]))
}

/// `(-1)^{sum m}`: phase relating the DFT to the continuum transform for a
/// grid whose node 0 sits at `x = -L`.
#[inline]
pub fn origin_phase(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.unravel(flat);
    let s: i64 = (0..grid.dim()).map(|a| grid.frequency_index(idx[a])).sum();
    if s.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Grid samples of the (periodized) function whose continuum Fourier
/// transform at the grid wavevectors is given by `symbol`.
///
/// Nyquist modes are dropped so odd symbols produce real fields.
pub fn sample_from_symbol<F>(grid: &Grid, symbol: F) -> Vec<f64>
where
    F: Fn(&[f64; 3]) -> C64 + Send + Sync,
{
    let inv_vol = 1.0 / grid.cell_volume();
    let tab = table(grid);
    let mut data = par::map_range(grid.len(), |k| {
        if tab.nyquist[k] {
            return C64::new(0.0, 0.0);
        }
        symbol(&tab.xi[k]) * (tab.phase[k] * inv_vol)
    });
    ifft(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// Continuum Fourier transform samples `h^n sum f(x_j) e^{-i xi.x_j}`.
pub fn continuum_transform(grid: &Grid, values: &[f64]) -> Vec<C64> {
    let vol = grid.cell_volume();
    let tab = table(grid);
    let mut data = fft_real(grid, values);
    par::for_each_mut(&mut data, |k, v| *v *= tab.phase[k] * vol);
    data
}

/// Inverse of [`continuum_transform`] (real part), dropping Nyquist modes.
pub fn from_continuum(grid: &Grid, spectrum: &[C64]) -> Vec<f64> {
    let inv_vol = 1.0 / grid.cell_volume();
    let tab = table(grid);
    let mut data = par::map_range(spectrum.len(), |k| {
        if tab.nyquist[k] {
            C64::new(0.0, 0.0)
        } else {
            spectrum[k] * (tab.phase[k] * inv_vol)
        }
    });
    ifft(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}

/// [`continuum_transform`] of two real fields with one complex FFT.
pub fn continuum_transform_pair(grid: &Grid, a: &[f64], b: &[f64]) -> (Vec<C64>, Vec<C64>) {
    let vol = grid.cell_volume();
    let tab = table(grid);
    let (mut fa, mut fb) = fft_real_pair(grid, a, b);
    par::for_each_mut(&mut fa, |k, v| *v *= tab.phase[k] * vol);
    par::for_each_mut(&mut fb, |k, v| *v *= tab.phase[k] * vol);
    (fa, fb)
}

/// [`from_continuum`] of two Hermitian spectra with one complex FFT.
pub fn from_continuum_pair(grid: &Grid, a: &[C64], b: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let inv_vol = 1.0 / grid.cell_volume();
    let tab = table(grid);
    let i = C64::new(0.0, 1.0);
    let mut data = par::map_range(a.len(), |k| {
        if tab.nyquist[k] {
            C64::new(0.0, 0.0)
        } else {
            (a[k] + i * b[k]) * (tab.phase[k] * inv_vol)
        }
    });
    ifft(grid, &mut data);
    data.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Applies a Fourier multiplier to a real field (translation invariant, so
/// no origin phase is needed).
pub fn apply_multiplier<F>(grid: &Grid, values: &[f64], multiplier: F) -> Vec<f64>
where
    F: Fn(&[f64; 3]) -> C64 + Send + Sync,
{
    let tab = table(grid);
    let mut data = fft_real(grid, values);
    par::for_each_mut(&mut data, |k, v| {
        *v = if tab.nyquist[k] { C64::new(0.0, 0.0) } else { *v * multiplier(&tab.xi[k]) };
    });
    ifft(grid, &mut data);
    data.into_iter().map(|c| c.re).collect()
}
