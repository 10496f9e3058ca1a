//! Full trajectories: log-spaced sampling, ledger rows, snapshots and abort handling.

use serde::Serialize;

use super::stepper::{StepRecord, Stepper};
use super::{make_model, InterfaceState, Scheme, VelocitySource};
use crate::error::{Error, Result};
use crate::functionals::{record_with, FunctionalRecord};
use crate::runner::RunConfig;
use crate::spectral::SpectralField;

/// Why and when a run stopped early.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortMarker {
    pub t: f64,
    pub kind: String,
    pub message: String,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub config: RunConfig,
    pub records: Vec<FunctionalRecord>,
    pub steps: Vec<StepRecord>,
    /// `(t, h samples)`.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub abort: Option<AbortMarker>,
    /// Time of the first boundary-contamination breach; rows at or after it are flagged.
    pub contamination_from: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SimulationResult {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    /// Rows usable for fitting (before any contamination breach).
    pub fn clean_records(&self) -> &[FunctionalRecord] {
        match self.contamination_from {
            Some(tc) => {
                let k = self.records.partition_point(|r| r.t < tc);
                &self.records[..k]
            }
            None => &self.records,
        }
    }

    pub fn column(&self, f: impl Fn(&FunctionalRecord) -> f64) -> Vec<f64> {
        self.clean_records().iter().map(f).collect()
    }
}

/// `0` followed by log-spaced times from `t_first` to `t_end` at the given density.
pub fn sample_times(t_first: f64, t_end: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t_end / t_first).log10();
    let count = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let mut ts = vec![0.0];
    ts.extend((0..=count).map(|i| t_first * 10f64.powf(decades * i as f64 / count as f64)));
    *ts.last_mut().unwrap() = t_end;
    ts
}

/// `max |h|` over the outer 10% band of the domain, relative to `‖h‖∞`.
pub fn boundary_ratio(h: &SpectralField) -> f64 {
    let sup = h.sup_norm();
    if sup == 0.0 {
        return 0.0;
    }
    let grid = h.grid();
    let l = grid.length();
    let in_band = |c: f64| c < 0.05 * l || c >= 0.95 * l;
    let mut band: f64 = 0.0;
    for (p, v) in h.values().iter().enumerate() {
        let x = grid.coordinates(p);
        if in_band(x[0]) || (grid.dim() == 2 && in_band(x[1])) {
            band = band.max(v.abs());
        }
    }
    band / sup
}

fn abort_kind(e: &Error) -> &'static str {
    match e {
        Error::LipschitzViolation { .. } => "lipschitz",
        Error::SolverNonConvergence { .. } => "solver",
        Error::StepUnderflow { .. } => "step_underflow",
        Error::Contamination { .. } => "contamination",
        _ => "error",
    }
}

/// Runs a validated configuration. Numerical failures end the run early with
/// an [`AbortMarker`]; configuration errors are returned as `Err`.
pub fn run_simulation(config: &RunConfig) -> Result<SimulationResult> {
    let config = config.clone().validate()?;
    let grid = config.grid()?;
    let scheme = config.scheme();
    let h0 = config.initial.build(&grid, config.seed)?;
    let state = InterfaceState::new(h0, 0.0)?;
    let model = make_model(scheme, &grid, config.z_factor, config.solver_tol)?;
    let source = match scheme {
        Scheme::FlatDtn => VelocitySource::FlatDtn,
        Scheme::Elliptic => VelocitySource::Elliptic,
    };
    let mut stepper = Stepper::new(model, state, config.controller)?;

    let times = sample_times(config.t_first, config.t_end, config.samples_per_decade);
    let snapshot_at: Vec<usize> = if config.snapshot_count == 0 {
        Vec::new()
    } else if config.snapshot_count == 1 {
        vec![times.len() - 1]
    } else {
        let last = (times.len() - 1) as f64;
        (0..config.snapshot_count)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    let frac = (i - 1) as f64 / (config.snapshot_count - 2).max(1) as f64;
                    (last.powf(frac)).round() as usize
                }
            })
            .collect()
    };

    let mut result = SimulationResult {
        config: config.clone(),
        records: Vec::with_capacity(times.len()),
        steps: Vec::new(),
        snapshots: Vec::new(),
        abort: None,
        contamination_from: None,
        accepted_steps: 0,
        rejected_steps: 0,
    };

    for (idx, &t) in times.iter().enumerate() {
        let advanced = match config.fixed_dt {
            Some(dt) => stepper.advance_fixed(t, dt, &mut result.steps),
            None => stepper.advance_to(t, &mut result.steps),
        };
        if let Err(e) = advanced {
            if e.is_numerical() {
                result.abort = Some(AbortMarker {
                    t: stepper.t(),
                    kind: abort_kind(&e).to_string(),
                    message: e.to_string(),
                });
                break;
            }
            return Err(e);
        }
        let h = &stepper.state().h;
        result.records.push(record_with(t, h, stepper.evaluation().dissipation, source));
        if snapshot_at.contains(&idx) {
            result.snapshots.push((t, h.values().to_vec()));
        }
        let ratio = boundary_ratio(h);
        if ratio > config.contamination_tol {
            let e = Error::Contamination {
                t,
                ratio,
                tolerance: config.contamination_tol,
            };
            result.contamination_from = Some(t);
            result.abort = Some(AbortMarker {
                t,
                kind: abort_kind(&e).to_string(),
                message: e.to_string(),
            });
            if !result.snapshots.iter().any(|(ts, _)| *ts == t) {
                result.snapshots.push((t, h.values().to_vec()));
            }
            break;
        }
    }
    result.accepted_steps = stepper.accepted_steps();
    result.rejected_steps = stepper.rejected_steps();
    Ok(result)
}
