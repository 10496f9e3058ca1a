//! Two-phase harmonic extension of the curvature in flattened coordinates
//! (one-dimensional graphs).
//!
//! Each phase is mapped to the strip `s ∈ [0, 1]` by `z = h(x) ± φ(s)` with the
//! stretched map `φ(s) = Z (e^{βs} - 1)/(e^β - 1)`. The Dirichlet energy
//! `∫ |∇f|²` becomes `∫∫ ∇F·B∇F dx ds` with
//! `B = [[φ', -σh'], [-σh', (1+h'²)/φ']]`, `σ = ±1` per phase, and is
//! discretized by second-order edge and cell differences. The discrete
//! minimizer with `F = H` at `s = 0` has a natural Neumann condition at `s = 1`.
//! The reaction `∂Q/∂F(·, 0)` of the minimized energy is the conormal jump,
//! which gives the height flux directly and makes `D = Q` exact.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_lipschitz, curvature, Evaluation, Scheme, VelocityField, VelocityModel, VelocitySource};
use crate::error::{Error, Result};
use crate::spectral::{SpectralField, TorusGrid};

/// Default strip height in units of the domain length.
pub const DEFAULT_Z_FACTOR: f64 = 4.0;
/// Default relative residual for the conjugate-gradient solve.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;

/// Potentials in both phases on the flattened grid.
#[derive(Debug, Clone)]
pub struct TwoPhaseField {
    pub grid: TorusGrid,
    /// Heights `φ(s_j)` of the mapped levels above (below) the interface.
    pub levels: Vec<f64>,
    /// Truncation height `Z`.
    pub z_top: f64,
    /// Upper-phase potential, row-major by level: `f_plus[j * n + i]`.
    pub f_plus: Vec<f64>,
    /// Lower-phase potential, same layout.
    pub f_minus: Vec<f64>,
    /// Final relative residuals of the two linear solves.
    pub residuals: [f64; 2],
}

impl TwoPhaseField {
    /// Largest difference between the two traces on the interface.
    pub fn interface_mismatch(&self) -> f64 {
        let n = self.grid.n();
        self.f_plus[..n]
            .iter()
            .zip(&self.f_minus[..n])
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
    }
}

/// Output of one elliptic solve.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub field: TwoPhaseField,
    pub velocity: VelocityField,
    /// Discrete `∫|∇f|²` over both phases.
    pub dissipation: f64,
    pub iterations: [usize; 2],
}

struct Geometry {
    n: usize,
    m: usize,
    dx: f64,
    /// `w_j φ'(s_j) / dx` for `j = 0..=m`.
    cx: Vec<f64>,
    /// `dx / (φ'(s_{j+1/2}) ds)` for `j = 0..m`.
    cs: Vec<f64>,
}

/// Reusable solver: geometry, transform plans and warm starts.
pub struct EllipticSolver {
    grid: TorusGrid,
    z_top: f64,
    levels: Vec<f64>,
    geom: Geometry,
    tolerance: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    warm: [Option<Vec<f64>>; 2],
}

impl std::fmt::Debug for EllipticSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticSolver")
            .field("grid", &self.grid)
            .field("z_top", &self.z_top)
            .field("levels", &self.geom.m)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

/// Solves `β/(e^β - 1) = target` for `β > 0` (`target < 1`).
fn stretch_exponent(target: f64) -> f64 {
    let g = |b: f64| b / b.exp_m1();
    let (mut lo, mut hi) = (1e-12, 1.0);
    while g(hi) > target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl EllipticSolver {
    /// `z_factor` sets the strip height `Z = z_factor * L`; values below 2 are rejected.
    pub fn new(grid: &TorusGrid, z_factor: f64, tolerance: f64) -> Result<Self> {
        if grid.dim() != 1 {
            return Err(Error::InvalidArgument(
                "the elliptic solver handles one-dimensional graphs only".into(),
            ));
        }
        if !(z_factor >= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "strip height Z = {z_factor} L is below the minimum 2 L"
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        let n = grid.n();
        let m = n / 2;
        let length = grid.length();
        let dx = grid.spacing();
        let ds = 1.0 / m as f64;
        let z_top = z_factor * length;
        // First cell is square: φ'(0) ds = dx.
        let beta = stretch_exponent(m as f64 * dx / z_top);
        let denom = beta.exp_m1();
        let phi = |s: f64| z_top * (beta * s).exp_m1() / denom;
        let dphi = |s: f64| z_top * beta * (beta * s).exp() / denom;
        let levels = (0..=m).map(|j| phi(j as f64 * ds)).collect();
        let cx = (0..=m)
            .map(|j| {
                let w = if j == 0 || j == m { 0.5 * ds } else { ds };
                w * dphi(j as f64 * ds) / dx
            })
            .collect();
        let cs = (0..m)
            .map(|j| dx / (dphi((j as f64 + 0.5) * ds) * ds))
            .collect();
        let mut planner = FftPlanner::new();
        Ok(EllipticSolver {
            grid: grid.clone(),
            z_top,
            levels,
            geom: Geometry { n, m, dx, cx, cs },
            tolerance,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            warm: [None, None],
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn z_top(&self) -> f64 {
        self.z_top
    }

    /// Solves with the curvature of `h` as interface data.
    pub fn solve(&mut self, h: &SpectralField) -> Result<EllipticSolution> {
        let hc = curvature(h)?;
        self.solve_with_boundary(h, &hc)
    }

    /// Solves with arbitrary interface data `boundary` on the graph of `h`.
    pub fn solve_with_boundary(
        &mut self,
        h: &SpectralField,
        boundary: &SpectralField,
    ) -> Result<EllipticSolution> {
        if h.grid() != &self.grid || boundary.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        check_lipschitz(h)?;
        let n = self.geom.n;
        let hp = h.partial(0).into_values();
        let hp_half: Vec<f64> = (0..n).map(|i| 0.5 * (hp[i] + hp[(i + 1) % n])).collect();
        let mean_metric = hp.iter().map(|p| 1.0 + p * p).sum::<f64>() / n as f64;
        let g = boundary.values().to_vec();

        let warm = [self.warm[0].take(), self.warm[1].take()];
        let [w_plus, w_minus] = warm;
        let this = &*self;
        let (plus, minus) = rayon::join(
            || this.solve_phase(1.0, &hp, &hp_half, mean_metric, &g, w_plus),
            || this.solve_phase(-1.0, &hp, &hp_half, mean_metric, &g, w_minus),
        );
        let plus = plus?;
        let minus = minus?;

        let mut reaction = vec![0.0; n];
        for i in 0..n {
            reaction[i] = plus.reaction[i] + minus.reaction[i];
        }
        let raw: Vec<f64> = reaction.iter().map(|r| r / (2.0 * self.geom.dx)).collect();
        let raw_field = SpectralField::from_values(&self.grid, raw)?;
        let raw_mean = raw_field.mean();
        let flux = raw_field.map_coefficients(|p, c| if p == 0 { Complex64::new(0.0, 0.0) } else { c }).dealiased();
        let velocity = VelocityField::from_flux(h, flux, VelocitySource::Elliptic, raw_mean)?;
        let dissipation = plus.energy + minus.energy;

        self.warm = [Some(plus.solution.clone()), Some(minus.solution.clone())];
        Ok(EllipticSolution {
            field: TwoPhaseField {
                grid: self.grid.clone(),
                levels: self.levels.clone(),
                z_top: self.z_top,
                f_plus: plus.solution,
                f_minus: minus.solution,
                residuals: [plus.residual, minus.residual],
            },
            velocity,
            dissipation,
            iterations: [plus.iterations, minus.iterations],
        })
    }

    fn solve_phase(
        &self,
        sigma: f64,
        hp: &[f64],
        hp_half: &[f64],
        mean_metric: f64,
        boundary: &[f64],
        warm: Option<Vec<f64>>,
    ) -> Result<PhaseSolution> {
        let Geometry { n, m, .. } = self.geom;
        let size = n * (m + 1);
        let op = Operator {
            geom: &self.geom,
            sigma,
            hp,
            hp_half,
        };
        // Right-hand side: minus the gradient from the boundary row alone.
        let mut full = vec![0.0; size];
        full[..n].copy_from_slice(boundary);
        let mut grad = vec![0.0; size];
        op.gradient(&full, &mut grad);
        let b: Vec<f64> = grad.iter().enumerate().map(|(p, g)| if p < n { 0.0 } else { -g }).collect();
        let pre = Preconditioner::new(&self.geom, mean_metric, &self.fft, &self.ifft);

        let mut x = match warm {
            Some(w) if w.len() == size => {
                let mut w = w;
                w[..n].iter_mut().for_each(|v| *v = 0.0);
                w
            }
            _ => vec![0.0; size],
        };
        let (iterations, residual) = pcg(&op, &pre, &b, &mut x, self.tolerance)?;

        x[..n].copy_from_slice(boundary);
        op.gradient(&x, &mut grad);
        let reaction = grad[..n].to_vec();
        let energy = 0.5 * boundary.iter().zip(&reaction).map(|(a, b)| a * b).sum::<f64>();
        Ok(PhaseSolution {
            solution: x,
            reaction,
            energy,
            iterations,
            residual,
        })
    }
}

struct PhaseSolution {
    solution: Vec<f64>,
    reaction: Vec<f64>,
    energy: f64,
    iterations: usize,
    residual: f64,
}

struct Operator<'a> {
    geom: &'a Geometry,
    sigma: f64,
    hp: &'a [f64],
    hp_half: &'a [f64],
}

impl Operator<'_> {
    /// Gradient of the discrete quadratic energy `Q(F)` at every node.
    fn gradient(&self, f: &[f64], out: &mut [f64]) {
        let Geometry { n, m, cx, cs, .. } = self.geom;
        let (n, m) = (*n, *m);
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..=m {
            let c = 2.0 * cx[j];
            let row = j * n;
            for i in 0..n {
                let ip = if i + 1 == n { 0 } else { i + 1 };
                let d = c * (f[row + ip] - f[row + i]);
                out[row + i] -= d;
                out[row + ip] += d;
            }
        }
        for j in 0..m {
            let lo = j * n;
            let hi = lo + n;
            for i in 0..n {
                let c = 2.0 * cs[j] * (1.0 + self.hp[i] * self.hp[i]);
                let d = c * (f[hi + i] - f[lo + i]);
                out[lo + i] -= d;
                out[hi + i] += d;
                let ip = if i + 1 == n { 0 } else { i + 1 };
                let cc = -0.5 * self.sigma * self.hp_half[i];
                let (f00, f10, f01, f11) = (f[lo + i], f[lo + ip], f[hi + i], f[hi + ip]);
                let a = f10 - f00 + f11 - f01;
                let s = f01 - f00 + f11 - f10;
                out[lo + i] += cc * (-s - a);
                out[lo + ip] += cc * (s - a);
                out[hi + i] += cc * (a - s);
                out[hi + ip] += cc * (s + a);
            }
        }
    }

    /// Operator on interior unknowns (boundary row treated as zero).
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.gradient(x, out);
        let n = self.geom.n;
        out[..n].iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Exact inverse of the operator for a flat interface with the metric
/// factor replaced by its mean: Fourier in `x`, tridiagonal in `s`.
struct Preconditioner<'a> {
    n: usize,
    m: usize,
    /// Sub-diagonal per level (independent of the wavenumber).
    sub: Vec<f64>,
    /// Thomas multipliers and pivots per wavenumber, `[k * m + level]`.
    upper: Vec<f64>,
    pivot: Vec<f64>,
    fft: &'a Arc<dyn Fft<f64>>,
    ifft: &'a Arc<dyn Fft<f64>>,
}

impl<'a> Preconditioner<'a> {
    fn new(geom: &Geometry, metric: f64, fft: &'a Arc<dyn Fft<f64>>, ifft: &'a Arc<dyn Fft<f64>>) -> Self {
        let (n, m) = (geom.n, geom.m);
        // Level jj = 0..m stands for s-index jj + 1; edge e joins s-indices e and e + 1.
        let cs: Vec<f64> = geom.cs.iter().map(|c| 2.0 * c * metric).collect();
        let sub: Vec<f64> = (0..m).map(|jj| if jj == 0 { 0.0 } else { -cs[jj] }).collect();
        let mut upper = vec![0.0; n * m];
        let mut pivot = vec![0.0; n * m];
        for k in 0..n {
            let mu = 4.0 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2);
            for jj in 0..m {
                let above = if jj + 1 < m { cs[jj + 1] } else { 0.0 };
                let diag = 2.0 * geom.cx[jj + 1] * mu + cs[jj] + above;
                let idx = k * m + jj;
                let p = if jj == 0 { diag } else { diag - sub[jj] * upper[idx - 1] };
                pivot[idx] = p;
                upper[idx] = -above / p;
            }
        }
        Preconditioner { n, m, sub, upper, pivot, fft, ifft }
    }

    fn apply(&self, r: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let mut rows: Vec<Complex64> = r[n..].iter().map(|&v| Complex64::new(v, 0.0)).collect();
        rows.par_chunks_mut(n).for_each(|row| self.fft.process(row));
        let mut cols = vec![Complex64::new(0.0, 0.0); n * m];
        for j in 0..m {
            for k in 0..n {
                cols[k * m + j] = rows[j * n + k];
            }
        }
        cols.par_chunks_mut(m).enumerate().for_each(|(k, col)| {
            let base = k * m;
            col[0] /= self.pivot[base];
            for j in 1..m {
                let prev = col[j - 1];
                col[j] = (col[j] - prev * self.sub[j]) / self.pivot[base + j];
            }
            for j in (0..m - 1).rev() {
                let next = col[j + 1];
                col[j] -= next * self.upper[base + j];
            }
        });
        for j in 0..m {
            for k in 0..n {
                rows[j * n + k] = cols[k * m + j];
            }
        }
        rows.par_chunks_mut(n).for_each(|row| self.ifft.process(row));
        let scale = 1.0 / n as f64;
        out[..n].iter_mut().for_each(|v| *v = 0.0);
        for (o, c) in out[n..].iter_mut().zip(&rows) {
            *o = c.re * scale;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(
    op: &Operator<'_>,
    pre: &Preconditioner<'_>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
) -> Result<(usize, f64)> {
    let size = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((0, 0.0));
    }
    let mut ax = vec![0.0; size];
    op.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; size];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; size];
    for it in 0..MAX_ITERATIONS {
        let res = dot(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok((it, res));
        }
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..size {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..size {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverNonConvergence {
        iterations: MAX_ITERATIONS,
        residual: dot(&r, &r).sqrt() / bnorm,
    })
}

impl VelocityModel for EllipticSolver {
    fn scheme(&self) -> Scheme {
        Scheme::Elliptic
    }

    fn evaluate(&mut self, h: &SpectralField) -> Result<Evaluation> {
        let lip = check_lipschitz(h)?;
        let sol = self.solve(h)?;
        Ok(Evaluation {
            velocity: sol.velocity,
            dissipation: sol.dissipation,
            lip,
        })
    }
}

/// One-shot elliptic solve with default strip height and tolerance.
pub fn elliptic_velocity(h: &SpectralField) -> Result<(TwoPhaseField, VelocityField, f64)> {
    let mut solver = EllipticSolver::new(h.grid(), DEFAULT_Z_FACTOR, DEFAULT_TOLERANCE)?;
    let sol = solver.solve(h)?;
    Ok((sol.field, sol.velocity, sol.dissipation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn flat_mode(n: usize) -> EllipticSolution {
        let g = make_grid(1, 2.0 * PI, n).unwrap();
        let h = SpectralField::zeros(&g);
        let data = SpectralField::from_fn(&g, |x| x[0].cos());
        let mut solver = EllipticSolver::new(&g, DEFAULT_Z_FACTOR, 1e-12).unwrap();
        solver.solve_with_boundary(&h, &data).unwrap()
    }

    #[test]
    fn flat_interface_mode() {
        let sol = flat_mode(64);
        assert!((sol.dissipation / (2.0 * PI) - 1.0).abs() < 1e-2, "{}", sol.dissipation);
        let expect = SpectralField::from_fn(sol.velocity.v.grid(), |x| 2.0 * x[0].cos());
        assert!(sol.velocity.v.max_abs_diff(&expect) < 2e-2);
        assert!(sol.field.interface_mismatch() == 0.0);
    }

    #[test]
    fn flat_interface_second_order() {
        let e: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| (flat_mode(n).dissipation - 2.0 * PI).abs())
            .collect();
        assert!(e[0] / e[1] > 3.5 && e[1] / e[2] > 3.5, "{e:?}");
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = make_grid(1, 10.0, 32).unwrap();
        let (field, v, d) = elliptic_velocity(&SpectralField::zeros(&g)).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(v.v.sup_norm(), 0.0);
        assert!(field.f_plus.iter().chain(&field.f_minus).all(|&f| f == 0.0));
    }

    #[test]
    fn rejects_short_strip_and_two_dimensions() {
        let g = make_grid(1, 10.0, 32).unwrap();
        assert!(EllipticSolver::new(&g, 1.5, 1e-10).is_err());
        let g2 = make_grid(2, 10.0, 32).unwrap();
        assert!(EllipticSolver::new(&g2, 4.0, 1e-10).is_err());
    }

    #[test]
    fn tilted_bump_conserves_mass_and_balances_energy() {
        let g = make_grid(1, 40.0, 128).unwrap();
        let h = SpectralField::from_fn(&g, |x| 0.3 * (-(x[0] - 20.0).powi(2) / 2.0).exp());
        let mut solver = EllipticSolver::new(&g, DEFAULT_Z_FACTOR, 1e-12).unwrap();
        let sol = solver.solve(&h).unwrap();
        assert!(sol.velocity.raw_mean.abs() < 1e-9 * sol.velocity.flux.sup_norm());
        // dℰ/dt = -∫ H h_t must equal -D for the discrete minimizer.
        let hc = curvature(&h).unwrap();
        let rate = hc.inner(&sol.velocity.flux).unwrap();
        assert!((rate - sol.dissipation).abs() < 1e-8 * sol.dissipation, "{rate} {}", sol.dissipation);
    }
}
