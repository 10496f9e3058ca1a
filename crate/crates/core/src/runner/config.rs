//! Run configuration: TOML ingestion, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::gap_guard_limit;
use crate::solver::{InitialData, Scheme, StepController};
use crate::spectral::{make_grid, TorusGrid};

/// Decay-fit window. Unset bounds are filled during validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitWindow {
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    /// Require `2 k_min³ t_hi <= 0.04`.
    pub guard: bool,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow {
            t_lo: None,
            t_hi: None,
            guard: true,
        }
    }
}

/// Spectral-gap limit used by the fit guard.
pub const GAP_GUARD: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub n: usize,
    pub t_end: f64,
    /// Defaults to `elliptic` for one-dimensional grids with `n < 1024`, else `flat_dtn`.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::samples_per_decade")]
    pub samples_per_decade: usize,
    /// First positive sample time.
    #[serde(default = "defaults::t_first")]
    pub t_first: f64,
    #[serde(default = "defaults::snapshot_count")]
    pub snapshot_count: usize,
    /// Largest admissible `max |h|` in the outer 10% of the domain relative to `‖h‖∞`.
    #[serde(default = "defaults::contamination_tol")]
    pub contamination_tol: f64,
    /// Strip height of the elliptic solve in units of `L`.
    #[serde(default = "defaults::z_factor")]
    pub z_factor: f64,
    #[serde(default = "defaults::solver_tol")]
    pub solver_tol: f64,
    /// Constant step size; disables the adaptive controller.
    #[serde(default)]
    pub fixed_dt: Option<f64>,
    /// Exponent used for `L^p` curvature norms.
    #[serde(default = "defaults::norm_p")]
    pub norm_p: f64,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub controller: StepController,
    #[serde(default)]
    pub fit: FitWindow,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Provenance written by the runner; ignored on input.
    #[serde(default, skip_serializing)]
    pub manifest: Option<toml::Table>,
}

mod defaults {
    pub fn samples_per_decade() -> usize {
        64
    }
    pub fn t_first() -> f64 {
        1e-2
    }
    pub fn snapshot_count() -> usize {
        8
    }
    pub fn contamination_tol() -> f64 {
        1e-2
    }
    pub fn z_factor() -> f64 {
        4.0
    }
    pub fn solver_tol() -> f64 {
        1e-10
    }
    pub fn norm_p() -> f64 {
        4.0
    }
}

impl RunConfig {
    /// A configuration with every optional key at its default.
    pub fn new(dim: usize, length: f64, n: usize, t_end: f64) -> Self {
        RunConfig {
            dim,
            length,
            n,
            t_end,
            scheme: None,
            seed: 0,
            samples_per_decade: defaults::samples_per_decade(),
            t_first: defaults::t_first(),
            snapshot_count: defaults::snapshot_count(),
            contamination_tol: defaults::contamination_tol(),
            z_factor: defaults::z_factor(),
            solver_tol: defaults::solver_tol(),
            fixed_dt: None,
            norm_p: defaults::norm_p(),
            initial: InitialData::default(),
            controller: StepController::default(),
            fit: FitWindow::default(),
            out_dir: None,
            manifest: None,
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        make_grid(self.dim, self.length, self.n)
    }

    /// The resolved scheme (only meaningful after [`RunConfig::validate`]).
    pub fn scheme(&self) -> Scheme {
        self.scheme.unwrap_or(if self.dim == 1 && self.n < 1024 {
            Scheme::Elliptic
        } else {
            Scheme::FlatDtn
        })
    }

    /// Resolved fit window `(t_lo, t_hi)`.
    pub fn fit_window(&self) -> (f64, f64) {
        (self.fit.t_lo.unwrap_or(0.0), self.fit.t_hi.unwrap_or(self.t_end))
    }

    /// Checks every constraint and fills defaults that depend on other keys.
    pub fn validate(mut self) -> Result<Self> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::config("dim", format!("must be 1 or 2, got {}", self.dim)));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::config("L", format!("must be positive and finite, got {}", self.length)));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::config(
                "n",
                format!("must be a power of two and at least 8, got {}", self.n),
            ));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::config("t_end", format!("must be positive, got {}", self.t_end)));
        }
        if !(self.t_first > 0.0 && self.t_first < self.t_end) {
            return Err(Error::config("t_first", "must satisfy 0 < t_first < t_end"));
        }
        if self.samples_per_decade == 0 {
            return Err(Error::config("samples_per_decade", "must be at least 1"));
        }
        if !(self.contamination_tol > 0.0) {
            return Err(Error::config("contamination_tol", "must be positive"));
        }
        if !(self.z_factor >= 2.0) {
            return Err(Error::config(
                "z_factor",
                format!("strip height Z = {} L is below 2 L", self.z_factor),
            ));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1e-2) {
            return Err(Error::config("solver_tol", "must lie in (0, 1e-2)"));
        }
        if !(self.norm_p >= 1.0) {
            return Err(Error::config("norm_p", "must be at least 1"));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return Err(Error::config("fixed_dt", "must be positive"));
            }
        }
        let c = &self.controller;
        if !(c.rel_change_target > 0.0 && c.energy_tol >= 0.0 && c.dt_initial > 0.0 && c.dt_min > 0.0 && c.dt_max > 0.0 && c.max_growth > 1.0) {
            return Err(Error::config("controller", "targets and step sizes must be positive, max_growth > 1"));
        }
        let scheme = self.scheme();
        if scheme == Scheme::Elliptic && self.dim != 1 {
            return Err(Error::config("scheme", "elliptic velocity is available for dim = 1 only"));
        }
        self.scheme = Some(scheme);

        let grid = self.grid()?;
        let gap_limit = gap_guard_limit(&grid);
        let t_hi = match self.fit.t_hi {
            Some(t) => t,
            None if self.fit.guard => gap_limit.min(self.t_end),
            None => self.t_end,
        };
        if t_hi > self.t_end {
            return Err(Error::config(
                "fit.t_hi",
                format!("t_hi = {t_hi} exceeds t_end = {}", self.t_end),
            ));
        }
        if self.fit.guard {
            let k = grid.k_min();
            let value = 2.0 * k.powi(3) * t_hi;
            if value > GAP_GUARD * (1.0 + 1e-12) {
                return Err(Error::config(
                    "fit.t_hi",
                    format!(
                        "gap guard violated: 2 k_min^3 t_hi = {value:.4e} > {GAP_GUARD} (k_min = {k:.6e}); largest admissible t_hi is {gap_limit:.6e}"
                    ),
                ));
            }
        }
        let t_lo = self.fit.t_lo.unwrap_or(t_hi / 25.0);
        if !(t_lo > 0.0 && t_lo < t_hi) {
            return Err(Error::config("fit.t_lo", format!("need 0 < t_lo < t_hi = {t_hi}, got {t_lo}")));
        }
        self.fit.t_lo = Some(t_lo);
        self.fit.t_hi = Some(t_hi);
        Ok(self)
    }
}

/// Parses and validates a TOML configuration. A `[manifest]` table is ignored.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.manifest = None;
    cfg.validate()
}
