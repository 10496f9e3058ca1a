//! Initial heights: bumps, bump clusters, random band-limited fields and single modes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lipschitz;
use crate::error::{Error, Result};
use crate::spectral::{Complex64, SpectralField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Flat,
    /// Gaussian of width `sigma` centred in the domain.
    Gaussian,
    /// Smooth compactly supported bump of radius `radius`.
    Bump,
    /// `count` positive Gaussians with centres within `spread` of the domain centre.
    Cluster,
    /// Random field with spectral envelope `|k|^{-gamma}`, band-limited, zero mean.
    Random,
    /// `cos(k x₁)` with `k` the `mode`-th wavenumber.
    Mode,
}

/// Initial-data specification. Exactly one of `amplitude` (peak `|h|`) or
/// `slope` (`‖∇h‖∞`) fixes the scale; without either the unscaled profile
/// (unit peak) is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialData {
    pub family: Family,
    pub amplitude: Option<f64>,
    pub slope: Option<f64>,
    pub sigma: f64,
    pub radius: f64,
    pub count: usize,
    pub spread: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub gamma: f64,
    pub mode: u32,
    /// Overrides the run seed for this family.
    pub seed: Option<u64>,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            family: Family::Gaussian,
            amplitude: None,
            slope: Some(0.1),
            sigma: 1.0,
            radius: 3.0,
            count: 3,
            spread: 1.0,
            sigma_min: 0.7,
            sigma_max: 1.1,
            gamma: 2.0,
            mode: 1,
            seed: None,
        }
    }
}

/// `exp(1 - 1/(1 - s²))` for `s < 1`, zero outside; peak value 1.
pub fn smooth_bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn centred(grid: &TorusGrid, x: [f64; 2]) -> [f64; 2] {
    let c = grid.length() / 2.0;
    if grid.dim() == 1 {
        [x[0] - c, 0.0]
    } else {
        [x[0] - c, x[1] - c]
    }
}

/// Random field with Gaussian coefficients times `|k|^{-gamma}`, restricted to
/// the 2/3-rule band, zero mean, real.
pub fn random_band_limited(grid: &TorusGrid, gamma: f64, rng: &mut ChaCha8Rng) -> SpectralField {
    let k = grid.k_abs();
    let coeffs: Vec<Complex64> = (0..grid.len())
        .map(|p| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            if k[p] == 0.0 || !grid.is_resolved(p) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(a, b) * k[p].powf(-gamma)
            }
        })
        .collect();
    // The real part of the inverse transform is the field of the Hermitian part.
    let values = grid.inverse(&coeffs);
    let f = SpectralField::from_values(grid, values).expect("grid sized");
    let mean = f.mean();
    f.map_values(|v| v - mean).dealiased()
}

impl InitialData {
    /// Unscaled profile.
    fn profile(&self, grid: &TorusGrid, seed: u64) -> Result<SpectralField> {
        let seed = self.seed.unwrap_or(seed);
        Ok(match self.family {
            Family::Flat => SpectralField::zeros(grid),
            Family::Gaussian => {
                let s2 = 2.0 * self.sigma * self.sigma;
                SpectralField::from_fn(grid, |x| {
                    let [a, b] = centred(grid, x);
                    (-(a * a + b * b) / s2).exp()
                })
            }
            Family::Bump => SpectralField::from_fn(grid, |x| {
                let [a, b] = centred(grid, x);
                smooth_bump((a * a + b * b).sqrt() / self.radius)
            }),
            Family::Cluster => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dim = grid.dim();
                let bumps: Vec<([f64; 2], f64, f64)> = (0..self.count.max(1))
                    .map(|_| {
                        let r = self.spread * rng.random::<f64>().powf(1.0 / dim as f64);
                        let c = if dim == 1 {
                            [if rng.random::<bool>() { r } else { -r }, 0.0]
                        } else {
                            let th = 2.0 * PI * rng.random::<f64>();
                            [r * th.cos(), r * th.sin()]
                        };
                        let sigma = rng.random_range(self.sigma_min..=self.sigma_max);
                        let weight = rng.random_range(0.5..=1.0);
                        (c, sigma, weight)
                    })
                    .collect();
                SpectralField::from_fn(grid, |x| {
                    let [a, b] = centred(grid, x);
                    bumps
                        .iter()
                        .map(|(c, s, w)| {
                            let d2 = (a - c[0]).powi(2) + (b - c[1]).powi(2);
                            w * (-d2 / (2.0 * s * s)).exp()
                        })
                        .sum()
                })
            }
            Family::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                random_band_limited(grid, self.gamma, &mut rng)
            }
            Family::Mode => {
                let k = 2.0 * PI * self.mode as f64 / grid.length();
                SpectralField::from_fn(grid, |x| (k * x[0]).cos())
            }
        })
    }

    /// Builds the initial height on `grid`.
    pub fn build(&self, grid: &TorusGrid, seed: u64) -> Result<SpectralField> {
        if self.amplitude.is_some() && self.slope.is_some() {
            return Err(Error::config(
                "initial",
                "set at most one of amplitude and slope",
            ));
        }
        if self.family == Family::Cluster && !(self.sigma_min > 0.0 && self.sigma_max >= self.sigma_min) {
            return Err(Error::config("initial.sigma_min", "need 0 < sigma_min <= sigma_max"));
        }
        let raw = self.profile(grid, seed)?;
        if self.family == Family::Flat {
            return Ok(raw);
        }
        let factor = match (self.amplitude, self.slope) {
            (Some(a), None) => a / raw.sup_norm(),
            (None, Some(s)) => {
                if !(0.0..1.0).contains(&s) {
                    return Err(Error::config("initial.slope", "slope must lie in [0, 1)"));
                }
                s / lipschitz(&raw)
            }
            _ => 1.0,
        };
        if !factor.is_finite() {
            return Err(Error::config("initial", "profile vanishes on this grid"));
        }
        Ok(raw.scaled(factor))
    }
}
