//! Second-order exponential Runge–Kutta stepping with the stiff symbol
//! `-2|k|³` integrated exactly.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Evaluation, InterfaceState, VelocityModel};
use crate::error::{Error, Result};
use crate::functionals::energy;
use crate::spectral::SpectralField;

/// Adaptive step-size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepController {
    /// Target for the relative sup-norm gap between the two stages.
    pub rel_change_target: f64,
    /// Relative energy increase that rejects a step.
    pub energy_tol: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_growth: f64,
}

impl Default for StepController {
    fn default() -> Self {
        StepController {
            rel_change_target: 1e-3,
            energy_tol: 1e-8,
            dt_initial: 1e-4,
            dt_min: 1e-12,
            dt_max: f64::INFINITY,
            max_growth: 2.0,
        }
    }
}

/// Result of one step attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Accepted { dt: f64, error: f64 },
    RejectedError { dt: f64, error: f64 },
    RejectedEnergy { dt: f64, increase: f64 },
    RejectedLipschitz { dt: f64, lip: f64 },
}

/// One accepted step as it appears in the step log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub lip: f64,
    pub error: f64,
}

struct Coefficients {
    decay: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
}

fn coefficients(k3: &[f64], dt: f64) -> Coefficients {
    let mut decay = Vec::with_capacity(k3.len());
    let mut phi1 = Vec::with_capacity(k3.len());
    let mut phi2 = Vec::with_capacity(k3.len());
    for &k in k3 {
        let z = -2.0 * k * dt;
        let (p1, p2) = if z.abs() < 1e-3 {
            (
                1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0,
                0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0,
            )
        } else {
            let e = z.exp_m1();
            (e / z, (e - z) / (z * z))
        };
        decay.push(z.exp());
        phi1.push(p1);
        phi2.push(p2);
    }
    Coefficients { decay, phi1, phi2 }
}

/// Time stepper holding the current state and its cached evaluation.
pub struct Stepper {
    model: Box<dyn VelocityModel>,
    state: InterfaceState,
    eval: Evaluation,
    energy: f64,
    energy_floor: f64,
    k3: Vec<f64>,
    pub controller: StepController,
    dt: f64,
    accepted: usize,
    rejected: usize,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("scheme", &self.model.scheme())
            .field("t", &self.state.t)
            .field("dt", &self.dt)
            .field("energy", &self.energy)
            .finish()
    }
}

struct Candidate {
    h: SpectralField,
    eval: Evaluation,
    energy: f64,
    error: f64,
}

impl Stepper {
    pub fn new(
        mut model: Box<dyn VelocityModel>,
        state: InterfaceState,
        controller: StepController,
    ) -> Result<Self> {
        let eval = model.evaluate(&state.h)?;
        let e = energy(&state.h);
        let k3 = state.h.grid().k_abs().iter().map(|k| k.powi(3)).collect();
        Ok(Stepper {
            model,
            eval,
            energy: e,
            energy_floor: 1e-14 * e,
            k3,
            dt: controller.dt_initial,
            controller,
            state,
            accepted: 0,
            rejected: 0,
        })
    }

    pub fn state(&self) -> &InterfaceState {
        &self.state
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn evaluation(&self) -> &Evaluation {
        &self.eval
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn nonlinear(&self, flux: &SpectralField, u: &SpectralField) -> Vec<Complex64> {
        flux.coefficients()
            .iter()
            .zip(u.coefficients())
            .zip(&self.k3)
            .map(|((f, u), k)| f + u * (2.0 * k))
            .collect()
    }

    fn candidate(&mut self, dt: f64) -> Result<Candidate> {
        let grid = self.state.h.grid().clone();
        let c = coefficients(&self.k3, dt);
        let u = &self.state.h;
        let n0 = self.nonlinear(&self.eval.velocity.flux, u);
        let a_hat: Vec<Complex64> = u
            .coefficients()
            .iter()
            .enumerate()
            .map(|(p, &u)| u * c.decay[p] + n0[p] * (dt * c.phi1[p]))
            .collect();
        let a = SpectralField::from_coefficients(&grid, a_hat)?;
        let eval_a = self.model.evaluate(&a)?;
        let na = self.nonlinear(&eval_a.velocity.flux, &a);
        let next_hat: Vec<Complex64> = a
            .coefficients()
            .iter()
            .enumerate()
            .map(|(p, &a)| a + (na[p] - n0[p]) * (dt * c.phi2[p]))
            .collect();
        let next = SpectralField::from_coefficients(&grid, next_hat)?;
        let scale = next.sup_norm();
        let error = if scale > 0.0 { next.max_abs_diff(&a) / scale } else { 0.0 };
        let eval = self.model.evaluate(&next)?;
        let e = energy(&next);
        Ok(Candidate {
            h: next,
            eval,
            energy: e,
            error,
        })
    }

    fn commit(&mut self, cand: Candidate, dt: f64, t_new: f64, log: &mut Vec<StepRecord>) {
        self.state = InterfaceState { h: cand.h, t: t_new };
        self.eval = cand.eval;
        self.energy = cand.energy;
        self.accepted += 1;
        log.push(StepRecord {
            t: t_new,
            dt,
            energy: self.energy,
            dissipation: self.eval.dissipation,
            lip: self.eval.lip,
            error: cand.error,
        });
    }

    /// Attempts one adaptive step of size at most `dt`, landing on `t_new` when accepted.
    fn attempt(&mut self, dt: f64, t_new: f64, log: &mut Vec<StepRecord>) -> Result<StepOutcome> {
        let cand = match self.candidate(dt) {
            Ok(c) => c,
            Err(Error::LipschitzViolation { lip }) => {
                return Ok(StepOutcome::RejectedLipschitz { dt, lip });
            }
            Err(e) => return Err(e),
        };
        let tol = self.controller.rel_change_target;
        if cand.error > tol {
            return Ok(StepOutcome::RejectedError { dt, error: cand.error });
        }
        let increase = cand.energy - self.energy;
        if increase > self.controller.energy_tol * self.energy && increase > self.energy_floor {
            return Ok(StepOutcome::RejectedEnergy { dt, increase });
        }
        let error = cand.error;
        self.commit(cand, dt, t_new, log);
        Ok(StepOutcome::Accepted { dt, error })
    }

    /// Advances adaptively to exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64, log: &mut Vec<StepRecord>) -> Result<()> {
        let ctl = self.controller;
        let mut last_lip = 0.0;
        while self.state.t < t_target {
            let remaining = t_target - self.state.t;
            let mut dt = self.dt.min(ctl.dt_max);
            let landing = dt >= remaining * (1.0 - 1e-12);
            if landing {
                dt = remaining;
            }
            let t_new = if landing { t_target } else { self.state.t + dt };
            match self.attempt(dt, t_new, log)? {
                StepOutcome::Accepted { error, .. } => {
                    let factor = if error > 0.0 {
                        (0.9 * (ctl.rel_change_target / error).sqrt()).min(ctl.max_growth)
                    } else {
                        ctl.max_growth
                    };
                    self.dt = if landing {
                        if factor >= 1.0 {
                            self.dt
                        } else {
                            dt * factor
                        }
                    } else {
                        dt * factor
                    };
                }
                StepOutcome::RejectedError { error, .. } => {
                    self.rejected += 1;
                    self.dt = dt * (0.9 * (ctl.rel_change_target / error).sqrt()).max(0.2);
                }
                StepOutcome::RejectedEnergy { .. } => {
                    self.rejected += 1;
                    self.dt = dt * 0.5;
                }
                StepOutcome::RejectedLipschitz { lip, .. } => {
                    self.rejected += 1;
                    last_lip = lip;
                    self.dt = dt * 0.5;
                }
            }
            if self.dt < ctl.dt_min {
                if last_lip >= 1.0 {
                    return Err(Error::LipschitzViolation { lip: last_lip });
                }
                return Err(Error::StepUnderflow {
                    t: self.state.t,
                    dt: self.dt,
                });
            }
        }
        Ok(())
    }

    /// Takes one step of exactly `dt` without error or energy control.
    pub fn step_fixed(&mut self, dt: f64, log: &mut Vec<StepRecord>) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let cand = self.candidate(dt)?;
        let t_new = self.state.t + dt;
        self.commit(cand, dt, t_new, log);
        Ok(())
    }

    /// Fixed steps of `dt` up to `t_target`, shortening the last one to land exactly.
    pub fn advance_fixed(&mut self, t_target: f64, dt: f64, log: &mut Vec<StepRecord>) -> Result<()> {
        while self.state.t < t_target {
            let remaining = t_target - self.state.t;
            if remaining <= dt * (1.0 + 1e-9) {
                let cand = self.candidate(remaining)?;
                self.commit(cand, remaining, t_target, log);
            } else {
                self.step_fixed(dt, log)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::evolve_linear;
    use crate::solver::SurrogateModel;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn phi_functions_continuous_at_small_argument() {
        let c = coefficients(&[1e-3 / 2.0 * (1.0 - 1e-9)], 1.0);
        let d = coefficients(&[1e-3 / 2.0 * (1.0 + 1e-9)], 1.0);
        assert!((c.phi1[0] - d.phi1[0]).abs() < 1e-12);
        assert!((c.phi2[0] - d.phi2[0]).abs() < 1e-10);
    }

    #[test]
    fn linear_regime_matches_exact_propagator() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let h0 = SpectralField::from_fn(&g, |x| 1e-4 * (2.0 * x[0]).cos());
        let state = InterfaceState::new(h0.clone(), 0.0).unwrap();
        let mut st = Stepper::new(Box::new(SurrogateModel), state, StepController::default()).unwrap();
        let mut log = Vec::new();
        st.step_fixed(0.01, &mut log).unwrap();
        let exact = evolve_linear(&h0, 0.01).unwrap();
        assert!(st.state().h.max_abs_diff(&exact) < 1e-10);
    }

    #[test]
    fn flat_state_is_stationary() {
        let g = make_grid(2, 10.0, 16).unwrap();
        let state = InterfaceState::new(SpectralField::zeros(&g), 0.0).unwrap();
        let mut st = Stepper::new(Box::new(SurrogateModel), state, StepController::default()).unwrap();
        let mut log = Vec::new();
        st.advance_to(5.0, &mut log).unwrap();
        assert_eq!(st.t(), 5.0);
        assert_eq!(st.state().h.sup_norm(), 0.0);
    }
}
