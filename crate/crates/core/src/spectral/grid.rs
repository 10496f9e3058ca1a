//! Periodic torus grids and the discrete Fourier transform contract.
//!
//! Forward transforms carry the factor `1/n^dim`, so a field is recovered as
//! `f(x) = sum_k c_k exp(i k.x)` and the coefficients approximate Fourier-series
//! coefficients. Storage is row-major with axis 0 outermost; coefficients use
//! FFT ordering, so index `i` on an axis carries the integer wavenumber
//! `j = i` for `i < n/2` and `j = i - n` otherwise (`j = -n/2` is the Nyquist mode).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Rows shorter than this are transformed serially.
const PARALLEL_MIN_POINTS: usize = 1 << 14;

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct GridInner {
    dim: usize,
    length: f64,
    n: usize,
    /// Angular wavenumbers per axis position, FFT order.
    axis_k: Vec<f64>,
    /// |k| per flat index.
    k_abs: Vec<f64>,
    plan: Plan,
}

/// A uniform periodic grid on `[0, L)^dim`, `dim` in {1, 2}.
///
/// Cloning is cheap; the wavenumber tables and transform plan are shared.
#[derive(Clone)]
pub struct TorusGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("dim", &self.inner.dim)
            .field("length", &self.inner.length)
            .field("n", &self.inner.n)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.dim == other.inner.dim
                && self.inner.n == other.inner.n
                && self.inner.length == other.inner.length)
    }
}

/// Signed integer wavenumber of FFT position `i` on an axis of `n` points.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl TorusGrid {
    pub fn new(dim: usize, length: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {length}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        let axis_k: Vec<f64> = (0..n)
            .map(|i| 2.0 * PI * signed_index(i, n) as f64 / length)
            .collect();
        let k_abs = match dim {
            1 => axis_k.iter().map(|k| k.abs()).collect(),
            _ => {
                let mut v = Vec::with_capacity(n * n);
                for &k0 in &axis_k {
                    for &k1 in &axis_k {
                        v.push(k0.hypot(k1));
                    }
                }
                v
            }
        };
        let mut planner = FftPlanner::new();
        let plan = Plan {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(TorusGrid {
            inner: Arc::new(GridInner {
                dim,
                length,
                n,
                axis_k,
                k_abs,
                plan,
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.inner.n
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.inner.n.pow(self.inner.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.inner.length / self.inner.n as f64
    }

    /// Volume of one grid cell, `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.inner.dim as i32)
    }

    /// Domain volume `L^dim`.
    pub fn volume(&self) -> f64 {
        self.inner.length.powi(self.inner.dim as i32)
    }

    /// Smallest nonzero wavenumber `2 pi / L`.
    pub fn k_min(&self) -> f64 {
        2.0 * PI / self.inner.length
    }

    /// Angular wavenumbers along one axis in FFT order.
    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.inner.axis_k
    }

    /// `|k|` per flat coefficient index.
    pub fn k_abs(&self) -> &[f64] {
        &self.inner.k_abs
    }

    /// Axis positions of flat index `p`.
    #[inline]
    pub fn unflatten(&self, p: usize) -> [usize; 2] {
        match self.inner.dim {
            1 => [p, 0],
            _ => [p / self.inner.n, p % self.inner.n],
        }
    }

    /// Wavenumber component along `axis` at flat index `p`.
    #[inline]
    pub fn k_component(&self, axis: usize, p: usize) -> f64 {
        self.inner.axis_k[self.unflatten(p)[axis]]
    }

    /// True where the axis position is the unpaired Nyquist mode.
    #[inline]
    pub fn is_nyquist(&self, axis: usize, p: usize) -> bool {
        self.unflatten(p)[axis] == self.inner.n / 2
    }

    /// True if every axis wavenumber satisfies `|j| <= n/3` (the 2/3 rule).
    #[inline]
    pub fn is_resolved(&self, p: usize) -> bool {
        let n = self.inner.n;
        let cut = (n / 3) as i64;
        let [a, b] = self.unflatten(p);
        signed_index(a, n).abs() <= cut && (self.inner.dim == 1 || signed_index(b, n).abs() <= cut)
    }

    /// Physical coordinates of flat index `p`; unused axes are zero.
    pub fn coordinates(&self, p: usize) -> [f64; 2] {
        let dx = self.spacing();
        let [a, b] = self.unflatten(p);
        match self.inner.dim {
            1 => [a as f64 * dx, 0.0],
            _ => [a as f64 * dx, b as f64 * dx],
        }
    }

    /// Same geometry with a different number of points per axis.
    pub fn with_points(&self, n: usize) -> Result<Self> {
        TorusGrid::new(self.inner.dim, self.inner.length, n)
    }

    /// Same point count on a torus scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        TorusGrid::new(self.inner.dim, self.inner.length * factor, self.inner.n)
    }

    /// Forward transform of real samples, normalized by `1/n^dim`.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len(), "sample count does not match grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Forward transform in place, normalized by `1/n^dim`.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inner.plan.forward);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }

    /// Inverse transform returning complex samples (no normalization).
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inner.plan.inverse);
    }

    /// Inverse transform returning the real part of the samples.
    pub fn inverse(&self, coefficients: &[Complex64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.len(), "coefficient count does not match grid");
        let mut buf = coefficients.to_vec();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    fn transform(&self, buf: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.inner.n;
        assert_eq!(buf.len(), self.len());
        match self.inner.dim {
            1 => fft.process(buf),
            _ => {
                transform_rows(buf, n, fft);
                transpose_square(buf, n);
                transform_rows(buf, n, fft);
                transpose_square(buf, n);
            }
        }
    }
}

fn transform_rows(buf: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    if buf.len() >= PARALLEL_MIN_POINTS {
        buf.par_chunks_mut(n).for_each(|row| fft.process(row));
    } else {
        fft.process(buf);
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in (a + 1)..n {
            buf.swap(a * n + b, b * n + a);
        }
    }
}

/// Validating constructor, `TorusGrid::new` under its operation name.
pub fn make_grid(dim: usize, length: f64, n: usize) -> Result<TorusGrid> {
    TorusGrid::new(dim, length, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(TorusGrid::new(1, 1.0, 12).is_err());
        assert!(TorusGrid::new(1, 1.0, 4).is_err());
        assert!(TorusGrid::new(1, 0.0, 8).is_err());
        assert!(TorusGrid::new(1, -2.0, 8).is_err());
        assert!(TorusGrid::new(3, 1.0, 8).is_err());
    }

    #[test]
    fn integer_wavenumbers_on_two_pi() {
        let g = make_grid(1, 2.0 * PI, 8).unwrap();
        let k: Vec<f64> = g.axis_wavenumbers().to_vec();
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(k.iter().filter(|&&v| v == 0.0).count(), 1);
        assert_eq!(g.spacing() * g.n() as f64, g.length());
    }

    #[test]
    fn two_dimensional_table() {
        let g = make_grid(2, 2.0 * PI, 16).unwrap();
        assert_eq!(g.len(), 256);
        let js: Vec<i64> = (0..16).map(|i| signed_index(i, 16)).collect();
        assert_eq!(*js.iter().min().unwrap(), -8);
        assert_eq!(*js.iter().max().unwrap(), 7);
        let p = 3 * 16 + 13;
        assert!((g.k_component(0, p) - 3.0).abs() < 1e-14);
        assert!((g.k_component(1, p) + 3.0).abs() < 1e-14);
        assert!((g.k_abs()[p] - 18f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn long_domain_k_min() {
        let g = make_grid(1, 100.0, 4096).unwrap();
        assert!((g.axis_wavenumbers()[1] - 0.0628318530718).abs() < 1e-12);
        assert!((g.k_min() - 2.0 * PI / 100.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_2d() {
        let g = make_grid(2, 3.0, 32).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|p| ((p * 37 % 101) as f64).sin()).collect();
        let back = g.inverse(&g.forward(&v));
        let err = v.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
