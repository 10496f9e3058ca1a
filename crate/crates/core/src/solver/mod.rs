//! Nonlinear Mullins–Sekerka evolution of a periodic graph `z = h(x)`.
//!
//! Conventions: `Ω₊ = {z > h}`, unit normal `n = (-∇h, 1)/√(1+|∇h|²)`,
//! mean curvature `H = div(∇h/√(1+|∇h|²))`, normal velocity `V = -[∇f·n]`,
//! so that `h_t = √(1+|∇h|²) V` and the linearization is `ĥ_t = -2|k|³ĥ`.

mod elliptic;
pub mod initial;
mod run;
mod stepper;

pub use elliptic::{elliptic_velocity, EllipticSolution, EllipticSolver, TwoPhaseField};
pub use initial::InitialData;
pub use run::{boundary_ratio, run_simulation, sample_times, AbortMarker, SimulationResult};
pub use stepper::{StepController, StepOutcome, StepRecord, Stepper};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{pointwise_norm, SpectralField};

/// How the normal velocity is obtained from the height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `h_t = 2|∇|H(h)`: flat Dirichlet-to-Neumann map applied to the nonlinear curvature.
    FlatDtn,
    /// Two-phase Laplace problem in flattened coordinates (one-dimensional graphs only).
    Elliptic,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::FlatDtn => "flat_dtn",
            Scheme::Elliptic => "elliptic",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_dtn" => Ok(Scheme::FlatDtn),
            "elliptic" => Ok(Scheme::Elliptic),
            other => Err(Error::InvalidArgument(format!(
                "unknown scheme {other:?}, expected flat_dtn or elliptic"
            ))),
        }
    }
}

/// Height profile at a time.
#[derive(Debug, Clone)]
pub struct InterfaceState {
    pub h: SpectralField,
    pub t: f64,
}

impl InterfaceState {
    /// Wraps an initial height after checking the Lipschitz gate.
    pub fn new(h: SpectralField, t: f64) -> Result<Self> {
        check_lipschitz(&h)?;
        Ok(InterfaceState { h, t })
    }

    pub fn dim(&self) -> usize {
        self.h.grid().dim()
    }
}

/// Pointwise `|∇h|` on the grid.
pub fn slope_field(h: &SpectralField) -> Vec<f64> {
    pointwise_norm(&h.gradient())
}

/// `‖∇h‖∞` on the grid.
pub fn lipschitz(h: &SpectralField) -> f64 {
    slope_field(h).into_iter().fold(0.0, f64::max)
}

/// Fails with [`Error::LipschitzViolation`] unless `‖∇h‖∞ < 1`.
pub fn check_lipschitz(h: &SpectralField) -> Result<f64> {
    let lip = lipschitz(h);
    if lip < 1.0 {
        Ok(lip)
    } else {
        Err(Error::LipschitzViolation { lip })
    }
}

/// Mean curvature `div(∇h/√(1+|∇h|²))`, dealiased.
pub fn curvature(h: &SpectralField) -> Result<SpectralField> {
    check_lipschitz(h)?;
    let grad = h.gradient();
    let slope = pointwise_norm(&grad);
    let metric: Vec<f64> = slope.iter().map(|s| 1.0 / (1.0 + s * s).sqrt()).collect();
    let grid = h.grid();
    let mut total: Option<SpectralField> = None;
    for (axis, g) in grad.iter().enumerate() {
        let q: Vec<f64> = g.values().iter().zip(&metric).map(|(a, m)| a * m).collect();
        let dq = SpectralField::from_values(grid, q)?.dealiased().partial(axis);
        total = Some(match total {
            None => dq,
            Some(acc) => acc.zip_values(&dq, |a, b| a + b)?,
        });
    }
    Ok(total.expect("dimension is at least one").dealiased())
}

/// Where a velocity came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    FlatDtn,
    Elliptic,
}

impl VelocitySource {
    pub fn as_str(self) -> &'static str {
        match self {
            VelocitySource::FlatDtn => "flat_dtn",
            VelocitySource::Elliptic => "elliptic",
        }
    }
}

/// Normal velocity and the corresponding height flux `h_t = √(1+|∇h|²) V`.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub v: SpectralField,
    pub flux: SpectralField,
    pub source: VelocitySource,
    /// Mean of the flux before any projection; a conservation diagnostic.
    pub raw_mean: f64,
}

impl VelocityField {
    fn from_flux(h: &SpectralField, flux: SpectralField, source: VelocitySource, raw_mean: f64) -> Result<Self> {
        let slope = slope_field(h);
        let v: Vec<f64> = flux
            .values()
            .iter()
            .zip(&slope)
            .map(|(f, s)| f / (1.0 + s * s).sqrt())
            .collect();
        Ok(VelocityField {
            v: SpectralField::from_values(h.grid(), v)?,
            flux,
            source,
            raw_mean,
        })
    }
}

/// Surrogate flux `2|∇|H(h)` together with the normal velocity and `D = 2∫H|∇|H`.
pub fn flat_dtn_velocity(h: &SpectralField) -> Result<(VelocityField, f64)> {
    let hc = curvature(h)?;
    flat_dtn_from_curvature(h, &hc)
}

/// Surrogate velocity for prescribed curvature data on the graph of `h`.
pub fn flat_dtn_from_curvature(h: &SpectralField, hc: &SpectralField) -> Result<(VelocityField, f64)> {
    let flux = hc.apply_multiplier(1.0)?.scaled(2.0);
    let dissipation = 2.0 * hc.homogeneous_norm_sqr(0.5);
    let mean = flux.mean();
    Ok((VelocityField::from_flux(h, flux, VelocitySource::FlatDtn, mean)?, dissipation))
}

/// Height flux, normal velocity and dissipation for one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub velocity: VelocityField,
    pub dissipation: f64,
    pub lip: f64,
}

/// A velocity law usable by the time stepper.
pub trait VelocityModel: Send {
    fn scheme(&self) -> Scheme;
    fn evaluate(&mut self, h: &SpectralField) -> Result<Evaluation>;
}

/// The flat-DtN surrogate as a [`VelocityModel`].
#[derive(Debug, Default, Clone)]
pub struct SurrogateModel;

impl VelocityModel for SurrogateModel {
    fn scheme(&self) -> Scheme {
        Scheme::FlatDtn
    }

    fn evaluate(&mut self, h: &SpectralField) -> Result<Evaluation> {
        let lip = check_lipschitz(h)?;
        let (velocity, dissipation) = flat_dtn_velocity(h)?;
        Ok(Evaluation {
            velocity,
            dissipation,
            lip,
        })
    }
}

/// Builds the velocity model for a scheme on the grid of `h`.
pub fn make_model(
    scheme: Scheme,
    grid: &crate::spectral::TorusGrid,
    z_factor: f64,
    tolerance: f64,
) -> Result<Box<dyn VelocityModel>> {
    Ok(match scheme {
        Scheme::FlatDtn => Box::new(SurrogateModel),
        Scheme::Elliptic => Box::new(EllipticSolver::new(grid, z_factor, tolerance)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn flat_has_no_curvature() {
        let g = make_grid(2, 2.0 * PI, 16).unwrap();
        let h = SpectralField::zeros(&g);
        assert_eq!(curvature(&h).unwrap().sup_norm(), 0.0);
        let (v, d) = flat_dtn_velocity(&h).unwrap();
        assert_eq!(v.v.sup_norm(), 0.0);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn rejects_steep_graphs() {
        let g = make_grid(1, 2.0 * PI, 32).unwrap();
        let h = SpectralField::from_fn(&g, |x| 1.2 * x[0].sin());
        assert!(matches!(curvature(&h), Err(Error::LipschitzViolation { .. })));
    }

    #[test]
    fn circle_apex_curvature() {
        // Upper arc of a circle of radius R, smoothly cut off far from the apex.
        let r = 40.0;
        let l = 20.0;
        let g = make_grid(1, l, 512).unwrap();
        let h = SpectralField::from_fn(&g, |x| {
            let s = x[0] - l / 2.0;
            let w = (-(s / 3.0).powi(8)).exp();
            w * ((r * r - s * s).sqrt() - r)
        });
        let hc = curvature(&h).unwrap();
        let apex = hc.values()[256];
        assert!((apex + 1.0 / r).abs() < 1e-8, "{apex}");
    }

    #[test]
    fn curvature_cubic_defect() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let defect = |eps: f64| {
            let h = SpectralField::from_fn(&g, |x| eps * (2.0 * x[0]).sin());
            curvature(&h).unwrap().max_abs_diff(&h.laplacian())
        };
        let order = (defect(0.02) / defect(0.01)).log2();
        assert!(order >= 2.9, "{order}");
    }

    #[test]
    fn surrogate_linear_limit() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let eps = 1e-4;
        let h = SpectralField::from_fn(&g, |x| eps * (3.0 * x[0]).cos());
        let (v, _) = flat_dtn_velocity(&h).unwrap();
        let expect = h.scaled(-2.0 * 27.0);
        assert!(v.flux.max_abs_diff(&expect) < 1e-6 * eps * 54.0);
        assert!(v.v.mean().abs() < 1e-15);
    }
}
