//! Real fields on a torus with lazily synchronized Fourier coefficients, and
//! the Fourier-multiplier operators built on them.

use std::fmt;
use std::sync::OnceLock;

use rustfft::num_complex::Complex64;

use super::grid::{signed_index, TorusGrid};
use crate::error::{Error, Result};

/// Real samples on a [`TorusGrid`] together with their Fourier coefficients.
///
/// At least one representation is always present; the other is computed on
/// first access and cached.
#[derive(Clone)]
pub struct SpectralField {
    grid: TorusGrid,
    values: OnceLock<Vec<f64>>,
    coefficients: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("values_synced", &self.values.get().is_some())
            .field("coefficients_synced", &self.coefficients.get().is_some())
            .finish()
    }
}

impl SpectralField {
    pub fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            values: OnceLock::from(values),
            coefficients: OnceLock::new(),
        })
    }

    pub fn from_coefficients(grid: &TorusGrid, coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coefficients.len()
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            values: OnceLock::new(),
            coefficients: OnceLock::from(coefficients),
        })
    }

    /// Samples `f` at the grid coordinates (`x[1]` is 0 in one dimension).
    pub fn from_fn(grid: &TorusGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.len()).map(|p| f(grid.coordinates(p))).collect();
        SpectralField {
            grid: grid.clone(),
            values: OnceLock::from(values),
            coefficients: OnceLock::new(),
        }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        SpectralField {
            grid: grid.clone(),
            values: OnceLock::from(vec![0.0; grid.len()]),
            coefficients: OnceLock::from(vec![Complex64::new(0.0, 0.0); grid.len()]),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values.get_or_init(|| {
            let c = self.coefficients.get().expect("field has no representation");
            self.grid.inverse(c)
        })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        self.coefficients.get_or_init(|| {
            let v = self.values.get().expect("field has no representation");
            self.grid.forward(v)
        })
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values();
        self.values.into_inner().unwrap()
    }

    /// New field with coefficients `f(p, c_p)`.
    pub fn map_coefficients(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let c: Vec<Complex64> = self
            .coefficients()
            .iter()
            .enumerate()
            .map(|(p, &c)| f(p, c))
            .collect();
        SpectralField {
            grid: self.grid.clone(),
            values: OnceLock::new(),
            coefficients: OnceLock::from(c),
        }
    }

    /// New field with samples `f(v)`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let v: Vec<f64> = self.values().iter().map(|&v| f(v)).collect();
        SpectralField {
            grid: self.grid.clone(),
            values: OnceLock::from(v),
            coefficients: OnceLock::new(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_values(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let v: Vec<f64> = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(SpectralField {
            grid: self.grid.clone(),
            values: OnceLock::from(v),
            coefficients: OnceLock::new(),
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if let Some(c) = self.coefficients.get() {
            let c = c.iter().map(|&z| z * factor).collect();
            return SpectralField::from_coefficients(&self.grid, c).unwrap();
        }
        self.map_values(|v| v * factor)
    }

    /// Multiplies coefficients by `|k|^alpha`.
    ///
    /// For `alpha < 0` the zero mode is set to zero; `|0|^0` is taken as 1.
    pub fn apply_multiplier(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= -1.0) {
            return Err(Error::InvalidArgument(format!(
                "multiplier exponent must be >= -1, got {alpha}"
            )));
        }
        let k = self.grid.k_abs();
        Ok(self.map_coefficients(|p, c| {
            if k[p] == 0.0 {
                if alpha == 0.0 {
                    c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else {
                c * k[p].powf(alpha)
            }
        }))
    }

    /// Spectral partial derivative along `axis`; the Nyquist mode is dropped.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(axis < self.grid.dim());
        let grid = self.grid.clone();
        self.map_coefficients(|p, c| {
            if grid.is_nyquist(axis, p) {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, grid.k_component(axis, p))
            }
        })
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.grid.dim()).map(|a| self.partial(a)).collect()
    }

    /// Spectral Laplacian, symbol `-|k|^2` (Nyquist kept).
    pub fn laplacian(&self) -> Self {
        let k = self.grid.k_abs();
        self.map_coefficients(|p, c| -c * (k[p] * k[p]))
    }

    /// Harmonic (Poisson) extension into the half-space, evaluated at height `z`.
    pub fn poisson_extend(&self, z: f64) -> Result<Self> {
        if !(z >= 0.0) {
            return Err(Error::InvalidArgument(format!("height must be >= 0, got {z}")));
        }
        let k = self.grid.k_abs();
        Ok(self.map_coefficients(|p, c| c * (-k[p] * z).exp()))
    }

    /// Zeroes every mode outside the 2/3-rule band.
    pub fn dealiased(&self) -> Self {
        let grid = self.grid.clone();
        self.map_coefficients(|p, c| {
            if grid.is_resolved(p) {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// The same trigonometric polynomial sampled on a grid with `n` points per axis.
    ///
    /// Refinement zero-pads; coarsening truncates. A Nyquist coefficient of the
    /// source is split symmetrically so the result stays real.
    pub fn resampled(&self, n: usize) -> Result<Self> {
        let target = self.grid.with_points(n)?;
        let src_n = self.grid.n();
        let dim = self.grid.dim();
        let src = self.coefficients();
        let mut out = vec![Complex64::new(0.0, 0.0); target.len()];
        let map_axis = |j: i64| -> Option<usize> {
            let half = (n / 2) as i64;
            if j >= -half && j < half {
                Some(if j < 0 { (j + n as i64) as usize } else { j as usize })
            } else {
                None
            }
        };
        for (p, &c) in src.iter().enumerate() {
            let [a, b] = self.grid.unflatten(p);
            let ja = signed_index(a, src_n);
            let jb = if dim == 2 { signed_index(b, src_n) } else { 0 };
            let nyq_a = a == src_n / 2;
            let nyq_b = dim == 2 && b == src_n / 2;
            // Split unpaired Nyquist modes over +/- when refining.
            let ja_set: Vec<(i64, f64)> = if nyq_a && n > src_n {
                vec![(ja, 0.5), (-ja, 0.5)]
            } else {
                vec![(ja, 1.0)]
            };
            let jb_set: Vec<(i64, f64)> = if nyq_b && n > src_n {
                vec![(jb, 0.5), (-jb, 0.5)]
            } else {
                vec![(jb, 1.0)]
            };
            for &(xa, wa) in &ja_set {
                for &(xb, wb) in &jb_set {
                    let (Some(ta), Some(tb)) = (map_axis(xa), map_axis(xb)) else {
                        continue;
                    };
                    let q = if dim == 1 { ta } else { ta * n + tb };
                    out[q] += c * (wa * wb);
                }
            }
        }
        SpectralField::from_coefficients(&target, out)
    }

    /// `∫ f dx` by the rectangle rule (spectrally exact for trigonometric polynomials).
    pub fn integral(&self) -> f64 {
        self.values().iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.coefficients()[0].re
    }

    pub fn sup_norm(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Grid `L^p` norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values().iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    /// `L^2` norm via Parseval.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.coefficients().iter().map(|c| c.norm_sqr()).sum();
        (s * self.grid.volume()).sqrt()
    }

    /// `∫ f g dx` via Parseval.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .coefficients()
            .iter()
            .zip(other.coefficients())
            .map(|(a, b)| (a * b.conj()).re)
            .sum();
        Ok(s * self.grid.volume())
    }

    /// Homogeneous Sobolev seminorm squared, `L^dim sum |k|^(2s) |c_k|^2`.
    pub fn homogeneous_norm_sqr(&self, s: f64) -> f64 {
        let k = self.grid.k_abs();
        let sum: f64 = self
            .coefficients()
            .iter()
            .zip(k)
            .filter(|(_, &k)| k > 0.0)
            .map(|(c, &k)| k.powf(2.0 * s) * c.norm_sqr())
            .sum();
        sum * self.grid.volume()
    }

    /// Largest pointwise deviation between two fields.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Pointwise Euclidean norm of a vector field given by components.
pub fn pointwise_norm(components: &[SpectralField]) -> Vec<f64> {
    let len = components[0].grid().len();
    (0..len)
        .map(|p| {
            components
                .iter()
                .map(|c| c.values()[p].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn grid1() -> TorusGrid {
        make_grid(1, 2.0 * PI, 64).unwrap()
    }

    fn rel_err(a: &SpectralField, b: &SpectralField) -> f64 {
        a.max_abs_diff(b) / b.sup_norm().max(1e-300)
    }

    #[test]
    fn round_trip_and_symmetry() {
        let g = make_grid(2, 5.0, 32).unwrap();
        let f = SpectralField::from_fn(&g, |x| (x[0] * 1.3).sin() * (2.0 * x[1]).cos() + x[0] * 0.01);
        let back = SpectralField::from_coefficients(&g, f.coefficients().to_vec()).unwrap();
        assert!(rel_err(&back, &f) < 1e-12);
        let n = g.n();
        let c = f.coefficients();
        for a in 0..n {
            for b in 0..n {
                let ma = (n - a) % n;
                let mb = (n - b) % n;
                assert!((c[a * n + b] - c[ma * n + mb].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dtn_on_cosine() {
        let g = grid1();
        let f = SpectralField::from_fn(&g, |x| (3.0 * x[0]).cos());
        let expect = SpectralField::from_fn(&g, |x| 3.0 * (3.0 * x[0]).cos());
        assert!(rel_err(&f.apply_multiplier(1.0).unwrap(), &expect) < 1e-12);
    }

    #[test]
    fn constant_killed_by_fractional_power() {
        let g = grid1();
        let one = SpectralField::from_fn(&g, |_| 1.0);
        assert!(one.apply_multiplier(0.5).unwrap().sup_norm() < 1e-15);
        assert!((one.apply_multiplier(0.0).unwrap().mean() - 1.0).abs() < 1e-15);
        assert!(one.apply_multiplier(-1.0).unwrap().sup_norm() < 1e-15);
        assert!(one.apply_multiplier(-1.5).is_err());
    }

    #[test]
    fn half_powers_compose() {
        let g = grid1();
        let f = SpectralField::from_fn(&g, |x| (x[0]).sin() + 0.3 * (5.0 * x[0]).cos() - 0.2 * (9.0 * x[0] + 1.0).sin());
        let twice = f.apply_multiplier(0.5).unwrap().apply_multiplier(0.5).unwrap();
        let once = f.apply_multiplier(1.0).unwrap();
        assert!(rel_err(&twice, &once) < 1e-12);
    }

    #[test]
    fn derivatives() {
        let g = grid1();
        let s = SpectralField::from_fn(&g, |x| x[0].sin());
        let c = SpectralField::from_fn(&g, |x| x[0].cos());
        assert!(rel_err(&s.partial(0), &c) < 1e-12);
        let c2 = SpectralField::from_fn(&g, |x| (2.0 * x[0]).cos());
        assert!(rel_err(&c2.laplacian(), &c2.scaled(-4.0)) < 1e-12);
        let one = SpectralField::from_fn(&g, |_| 2.5);
        assert!(one.partial(0).sup_norm() < 1e-14);
        let bumpy = SpectralField::from_fn(&g, |x| (x[0].sin()).exp());
        assert!(bumpy.laplacian().mean().abs() < 1e-12);
    }

    #[test]
    fn nyquist_dropped_by_odd_symbol() {
        let g = make_grid(1, 2.0 * PI, 8).unwrap();
        // cos(4x) sampled on 8 points is the pure Nyquist mode.
        let f = SpectralField::from_fn(&g, |x| (4.0 * x[0]).cos());
        assert!(f.partial(0).sup_norm() < 1e-14);
        assert!((f.laplacian().values()[0] + 16.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_extension() {
        let g = grid1();
        let f = SpectralField::from_fn(&g, |x| (2.0 * x[0]).cos());
        let up = f.poisson_extend(0.7).unwrap();
        let expect = f.scaled((-1.4f64).exp());
        assert!(rel_err(&up, &expect) < 1e-12);
        assert!(f.poisson_extend(-0.1).is_err());
        let one = SpectralField::from_fn(&g, |_| 1.0);
        for z in [0.0, 0.5, 3.0, 40.0] {
            let e = one.poisson_extend(z).unwrap();
            assert!(e.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn poisson_normal_derivative_is_minus_dtn() {
        // Richardson-extrapolated one-sided difference in z.
        let g = grid1();
        let f = SpectralField::from_fn(&g, |x| (x[0].sin()).exp() - 1.2);
        let dz = 1e-3;
        let d1 = f.poisson_extend(dz).unwrap().zip_values(&f, |a, b| (a - b) / dz).unwrap();
        let d2 = f
            .poisson_extend(dz / 2.0)
            .unwrap()
            .zip_values(&f, |a, b| (a - b) / (dz / 2.0))
            .unwrap();
        let rich = d2.zip_values(&d1, |b, a| 2.0 * b - a).unwrap();
        let dtn = f.apply_multiplier(1.0).unwrap().scaled(-1.0);
        assert!(rich.max_abs_diff(&dtn) < 1e-6 * dtn.sup_norm().max(1.0));
    }

    #[test]
    fn resample_preserves_polynomial() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let f = SpectralField::from_fn(&g, |x| (PI * x[0] / 2.0).sin() * (PI * x[1]).cos());
        let fine = f.resampled(64).unwrap();
        let direct = SpectralField::from_fn(fine.grid(), |x| (PI * x[0] / 2.0).sin() * (PI * x[1]).cos());
        assert!(fine.max_abs_diff(&direct) < 1e-12);
        let back = fine.resampled(16).unwrap();
        assert!(back.max_abs_diff(&f) < 1e-12);
    }
}
