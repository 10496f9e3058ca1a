//! Exact integration of the linearized flow `h_t = 2|∇|Δh`, its adjoint, the
//! self-similar kernel profile, and empirical constants for the linear
//! decay estimates.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, FitResult};
use crate::spectral::{make_grid, pointwise_norm, Complex64, SpectralField, TorusGrid};

/// Largest fit time for which the slowest torus mode has decayed by less than 4%.
pub fn gap_guard_limit(grid: &TorusGrid) -> f64 {
    0.04 / (2.0 * grid.k_min().powi(3))
}

/// The Fourier symbol `exp(-2|k|^3 t)` on a grid.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    grid: TorusGrid,
    t: f64,
    symbol: Vec<f64>,
}

impl LinearPropagator {
    pub fn new(grid: &TorusGrid, t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "propagation time must be finite and >= 0, got {t}"
            )));
        }
        let symbol = grid
            .k_abs()
            .iter()
            .map(|k| (-2.0 * k.powi(3) * t).exp())
            .collect();
        Ok(LinearPropagator {
            grid: grid.clone(),
            t,
            symbol,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, field: &SpectralField) -> Result<SpectralField> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(field.map_coefficients(|p, c| c * self.symbol[p]))
    }

    /// Entrywise product of symbols, i.e. the propagator for the summed time.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(LinearPropagator {
            grid: self.grid.clone(),
            t: self.t + other.t,
            symbol: self
                .symbol
                .iter()
                .zip(&other.symbol)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }
}

pub fn evolve_linear(h0: &SpectralField, t: f64) -> Result<SpectralField> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "forward evolution needs t >= 0, got {t}; use adjoint_evolve for backward problems"
        )));
    }
    LinearPropagator::new(h0.grid(), t)?.apply(h0)
}

/// Solution at time `t` of the backward problem `u_t + 2|∇|Δu = 0`, `u(T) = psi`.
pub fn adjoint_evolve(psi: &SpectralField, terminal: f64, t: f64) -> Result<SpectralField> {
    if !(t <= terminal) || t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "adjoint evolution needs 0 <= t <= T, got t = {t}, T = {terminal}"
        )));
    }
    LinearPropagator::new(psi.grid(), terminal - t)?.apply(psi)
}

/// Norms of a linear trajectory at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySample {
    pub t: f64,
    pub h_inf: f64,
    pub grad_inf: f64,
    pub l2: f64,
}

/// Evaluates `‖h‖∞`, `‖∇h‖∞` and `‖h‖₂` of the linear evolution at each time.
pub fn decay_series(h0: &SpectralField, times: &[f64]) -> Result<Vec<DecaySample>> {
    times
        .par_iter()
        .map(|&t| {
            let h = evolve_linear(h0, t)?;
            let grad = pointwise_norm(&h.gradient());
            Ok(DecaySample {
                t,
                h_inf: h.sup_norm(),
                grad_inf: grad.iter().fold(0.0, |m: f64, v| m.max(*v)),
                l2: h.l2_norm(),
            })
        })
        .collect()
}

/// Tabulated self-similar profile `G(1, x)` of the linear kernel as a function of `r = |x|`.
#[derive(Debug, Clone)]
pub struct KernelProfile {
    pub dim: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Side of the torus used for the final table.
    pub length: f64,
    /// Grid points per axis of the transform used for the normalization check.
    pub n: usize,
    /// Grid quadrature of the profile over the torus.
    pub normalization: f64,
    /// Largest change of the table under domain doubling, relative to the largest
    /// tail value (`r >= r_max / 4`).
    pub tail_change: f64,
}

/// Relative change under domain doubling above which a profile is flagged.
pub const KERNEL_TAIL_TOLERANCE: f64 = 1e-4;

fn kernel_table(dim: usize, length: f64, radii: &[f64]) -> Vec<f64> {
    // exp(-2 k^3) underflows past k = 7.
    let dk = 2.0 * PI / length;
    let jmax = (7.0 / dk).ceil() as i64;
    let weights: Vec<(f64, f64)> = (0..=jmax)
        .map(|j1| {
            let k1 = j1 as f64 * dk;
            let s = if dim == 1 {
                (-2.0 * k1.powi(3)).exp()
            } else {
                (-jmax..=jmax)
                    .map(|j2| {
                        let k2 = j2 as f64 * dk;
                        (-2.0 * (k1 * k1 + k2 * k2).powf(1.5)).exp()
                    })
                    .sum()
            };
            (k1, if j1 == 0 { s } else { 2.0 * s })
        })
        .collect();
    let norm = length.powi(dim as i32);
    radii
        .par_iter()
        .map(|&r| weights.iter().map(|&(k, w)| w * (k * r).cos()).sum::<f64>() / norm)
        .collect()
}

/// Computes `G(1, r)` for `r` in `[0, r_max]` at `n_samples` equally spaced radii.
///
/// The profile is a Fourier sum on a torus of side at least `16 r_max`; the
/// domain is doubled until the tail changes by less than [`KERNEL_TAIL_TOLERANCE`]
/// or three doublings have been tried.
pub fn kernel_profile(dim: usize, r_max: f64, n_samples: usize) -> Result<KernelProfile> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(r_max > 0.0) || n_samples < 2 {
        return Err(Error::InvalidArgument(
            "kernel profile needs r_max > 0 and at least two samples".into(),
        ));
    }
    let radii: Vec<f64> = (0..n_samples)
        .map(|i| r_max * i as f64 / (n_samples - 1) as f64)
        .collect();
    let tail_start = radii.partition_point(|&r| r < 0.25 * r_max);
    let mut length = (16.0 * r_max).max(64.0);
    let mut values = kernel_table(dim, length, &radii);
    let mut tail_change = f64::INFINITY;
    for _ in 0..3 {
        let doubled = kernel_table(dim, 2.0 * length, &radii);
        let scale = values[tail_start..]
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        let change = values[tail_start..]
            .iter()
            .zip(&doubled[tail_start..])
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        tail_change = change / scale.max(f64::MIN_POSITIVE);
        length *= 2.0;
        values = doubled;
        if tail_change <= KERNEL_TAIL_TOLERANCE {
            break;
        }
    }

    let spacing = if dim == 1 { 0.25 } else { 0.5 };
    let n = (length / spacing).log2().ceil().exp2() as usize;
    let grid = make_grid(dim, length, n)?;
    let vol = grid.volume();
    let coeffs: Vec<Complex64> = grid
        .k_abs()
        .iter()
        .map(|k| Complex64::new((-2.0 * k.powi(3)).exp() / vol, 0.0))
        .collect();
    let normalization = SpectralField::from_coefficients(&grid, coeffs)?.integral();

    Ok(KernelProfile {
        dim,
        radii,
        values,
        length,
        n,
        normalization,
        tail_change,
    })
}

impl KernelProfile {
    pub fn tail_converged(&self) -> bool {
        self.tail_change <= KERNEL_TAIL_TOLERANCE
    }

    /// Log–log regression of `|G|` against `r` over `[r_lo, r_hi]`.
    pub fn tail_slope(&self, r_lo: f64, r_hi: f64) -> Result<FitResult> {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        fit_power_law("kernel_tail", &self.radii, &abs, (r_lo, r_hi))
    }

    /// Range of `r^p |G(r)|` over `[r_lo, r_hi]`.
    pub fn weighted_range(&self, p: f64, r_lo: f64, r_hi: f64) -> (f64, f64) {
        self.radii
            .iter()
            .zip(&self.values)
            .filter(|(r, _)| **r >= r_lo && **r <= r_hi)
            .map(|(r, v)| r.powf(p) * v.abs())
            .fold((f64::INFINITY, 0.0), |(lo, hi), w| (lo.min(w), hi.max(w)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# kernel profile G(1, r); d = {}; torus side {}; transform grid {}^{}; normalization {:.15e}; tail change under doubling {:.3e}{}",
            self.dim,
            self.length,
            self.n,
            self.dim,
            self.normalization,
            self.tail_change,
            if self.tail_converged() { "" } else { " (NOT CONVERGED)" }
        )?;
        writeln!(w, "r,G")?;
        for (r, g) in self.radii.iter().zip(&self.values) {
            writeln!(w, "{r:.10e},{g:.16e}")?;
        }
        Ok(())
    }
}

/// Names of the constants estimated by [`verify_linear_bounds`], in report order.
pub const BOUND_NAMES: [&str; 6] = ["u", "grad_u", "v", "grad_v", "dz_grad_v", "tail"];

/// Empirical constants of the linear decay estimates over a family of terminal data.
#[derive(Debug, Clone)]
pub struct LinearBoundsReport {
    pub horizons: Vec<f64>,
    /// `constants[b][i]` is the supremum over the family of bound `BOUND_NAMES[b]`
    /// at horizon `horizons[i]`.
    pub constants: Vec<Vec<f64>>,
}

impl LinearBoundsReport {
    /// Ratio of the largest to the smallest constant across horizons (1 if all vanish).
    pub fn variation(&self, bound: usize) -> f64 {
        let row = &self.constants[bound];
        let hi = row.iter().cloned().fold(0.0, f64::max);
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            1.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn bounded(&self, bound: usize) -> bool {
        self.constants[bound].iter().all(|c| c.is_finite()) && self.variation(bound) <= 2.0
    }

    pub fn constant(&self, name: &str, horizon: usize) -> f64 {
        let b = BOUND_NAMES.iter().position(|n| *n == name).expect("unknown bound");
        self.constants[b][horizon]
    }
}

fn sup(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn bound_constants(psi: &SpectralField, horizon: f64) -> Result<[f64; 6]> {
    let scale = psi.sup_norm();
    if scale == 0.0 {
        return Ok([0.0; 6]);
    }
    let grid = psi.grid();
    let u = adjoint_evolve(psi, horizon, 0.0)?;
    let v = u.apply_multiplier(1.0)?.scaled(-1.0);
    let grad_v = v.gradient();
    // ∂_z of the harmonic extension of ∇v is -|∇|∇v.
    let dz_grad_v: Vec<SpectralField> = grad_v
        .iter()
        .map(|g| g.apply_multiplier(1.0).map(|f| f.scaled(-1.0)))
        .collect::<Result<_>>()?;
    let tau = horizon;

    let dim = grid.dim() as i32;
    let length = grid.length();
    let r0 = length / 8.0;
    let mut tail: f64 = 0.0;
    for z in [0.0, length / 16.0, length / 8.0, length / 4.0] {
        let ext = u.poisson_extend(z)?;
        for (p, &val) in ext.values().iter().enumerate() {
            let x = grid.coordinates(p);
            let wrap = |c: f64| if c > length / 2.0 { c - length } else { c };
            let (x0, x1) = (wrap(x[0]), if dim == 2 { wrap(x[1]) } else { 0.0 });
            if x0.abs() > length / 4.0 || x1.abs() > length / 4.0 {
                continue;
            }
            let r = (x0 * x0 + x1 * x1 + z * z).sqrt();
            if r >= r0 {
                tail = tail.max(val.abs() * r.powi(dim));
            }
        }
    }

    Ok([
        u.sup_norm() / scale,
        tau.powf(1.0 / 3.0) * sup(&pointwise_norm(&u.gradient())) / scale,
        tau.powf(1.0 / 3.0) * v.sup_norm() / scale,
        tau.powf(2.0 / 3.0) * sup(&pointwise_norm(&grad_v)) / scale,
        tau * sup(&pointwise_norm(&dz_grad_v)) / scale,
        tail / scale,
    ])
}

/// Estimates the constants of the linear decay bounds, evaluated at `t = 0`
/// for each terminal horizon `T`, as suprema over `family`.
pub fn verify_linear_bounds(
    family: &[SpectralField],
    horizons: &[f64],
) -> Result<LinearBoundsReport> {
    if horizons.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("horizons must be positive".into()));
    }
    let per_horizon: Vec<[f64; 6]> = horizons
        .par_iter()
        .map(|&t| {
            family.iter().try_fold([0.0f64; 6], |mut acc, psi| {
                let c = bound_constants(psi, t)?;
                for (a, v) in acc.iter_mut().zip(c) {
                    *a = a.max(v);
                }
                Ok(acc)
            })
        })
        .collect::<Result<_>>()?;
    let constants = (0..BOUND_NAMES.len())
        .map(|b| per_horizon.iter().map(|row| row[b]).collect())
        .collect();
    Ok(LinearBoundsReport {
        horizons: horizons.to_vec(),
        constants,
    })
}

/// Localized random terminal data with `‖psi‖∞ = 1`.
///
/// Member `i` is a Gaussian random field with correlation length spread
/// log-uniformly over `[0.3, 9]`, multiplied by a smooth window of radius
/// `L/16` centred in the domain. Member `i` uses stream `i` of `seed`.
pub fn localized_family(grid: &TorusGrid, count: usize, seed: u64) -> Vec<SpectralField> {
    let length = grid.length();
    let radius = length / 16.0;
    let centre = length / 2.0;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let frac = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
            let ell = 0.3 * 30f64.powf(frac);
            let coeffs: Vec<Complex64> = grid
                .k_abs()
                .iter()
                .map(|&k| {
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(a, b) * (-(k * ell).powi(2)).exp()
                })
                .collect();
            let raw = SpectralField::from_coefficients(grid, coeffs)
                .expect("grid sized")
                .values()
                .to_vec();
            let windowed: Vec<f64> = raw
                .iter()
                .enumerate()
                .map(|(p, v)| {
                    let x = grid.coordinates(p);
                    let dx0 = x[0] - centre;
                    let dx1 = if grid.dim() == 2 { x[1] - centre } else { 0.0 };
                    let s = (dx0 * dx0 + dx1 * dx1).sqrt() / radius;
                    let w = if s < 1.0 { (1.0 - 1.0 / (1.0 - s * s)).exp() } else { 0.0 };
                    v * w
                })
                .collect();
            let f = SpectralField::from_values(grid, windowed).expect("grid sized");
            let s = f.sup_norm();
            if s > 0.0 {
                f.scaled(1.0 / s)
            } else {
                f
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: &SpectralField, b: &SpectralField) -> f64 {
        a.max_abs_diff(b) / b.sup_norm()
    }

    #[test]
    fn single_mode_exact() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let h0 = SpectralField::from_fn(&g, |x| x[0].cos());
        let h = evolve_linear(&h0, 1.0).unwrap();
        let expect = h0.scaled((-2.0f64).exp());
        assert!(rel(&h, &expect) < 1e-12);
        assert!(evolve_linear(&h0, -1.0).is_err());
    }

    #[test]
    fn propagator_symbol_properties() {
        let g = make_grid(2, 40.0, 32).unwrap();
        let a = LinearPropagator::new(&g, 0.3).unwrap();
        let b = LinearPropagator::new(&g, 0.45).unwrap();
        let ab = a.compose(&b).unwrap();
        let direct = LinearPropagator::new(&g, 0.75).unwrap();
        assert_eq!(a.symbol()[0], 1.0);
        assert!(a.symbol().iter().all(|&s| s > 0.0 && s <= 1.0));
        for (x, y) in ab.symbol().iter().zip(direct.symbol()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn adjoint_terminal_and_duality() {
        let g = make_grid(1, 20.0, 128).unwrap();
        let h0 = SpectralField::from_fn(&g, |x| (-(x[0] - 8.0).powi(2)).exp());
        let psi = SpectralField::from_fn(&g, |x| (0.9 * x[0]).sin() + 0.5);
        assert!(adjoint_evolve(&psi, 2.0, 2.0).unwrap().max_abs_diff(&psi) < 1e-15);
        assert!(adjoint_evolve(&psi, 2.0, 2.5).is_err());
        let lhs = evolve_linear(&h0, 2.0).unwrap().inner(&psi).unwrap();
        let rhs = h0.inner(&adjoint_evolve(&psi, 2.0, 0.0).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn kernel_at_origin_matches_radial_integral() {
        let prof = kernel_profile(1, 20.0, 201).unwrap();
        let (q, _) = crate::quadrature::integrate(
            |k| (-2.0 * k.powi(3)).exp() / PI,
            0.0,
            8.0,
            1e-14,
            1e-14,
        )
        .unwrap();
        assert!((prof.values[0] - q).abs() < 1e-8);
        assert!((prof.normalization - 1.0).abs() < 1e-6);
        assert!(prof.tail_converged());
    }

    #[test]
    fn kernel_csv_has_header() {
        let prof = kernel_profile(2, 4.0, 9).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kernel profile"));
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn single_mode_bound_constants() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let psi = SpectralField::from_fn(&g, |x| x[0].cos());
        let horizons = [0.5, 1.0];
        let rep = verify_linear_bounds(&[psi], &horizons).unwrap();
        for (i, &t) in horizons.iter().enumerate() {
            let e = (-2.0 * t).exp();
            let expect = [
                ("u", e),
                ("grad_u", t.powf(1.0 / 3.0) * e),
                ("v", t.powf(1.0 / 3.0) * e),
                ("grad_v", t.powf(2.0 / 3.0) * e),
                ("dz_grad_v", t * e),
            ];
            for (name, val) in expect {
                let got = rep.constant(name, i);
                assert!((got / val - 1.0).abs() < 0.01, "{name}: {got} vs {val}");
            }
        }
    }

    #[test]
    fn zero_terminal_data() {
        let g = make_grid(1, 10.0, 32).unwrap();
        let rep = verify_linear_bounds(&[SpectralField::zeros(&g)], &[1.0, 4.0]).unwrap();
        assert!(rep.constants.iter().flatten().all(|&c| c == 0.0));
    }
}
