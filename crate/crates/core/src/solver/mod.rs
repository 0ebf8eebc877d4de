//! Newton-based solvers: plain power flow, the dense least-compensation
//! problem, and the shared machinery (damped steps, continuation).

mod dense;
mod homotopy;
pub(crate) mod kkt;
mod newton;
mod power_flow;

use serde::{Deserialize, Serialize};

use crate::circuit::{SlackVector, StateVector};
use crate::error::{Error, Result};

pub use dense::solve_dense;
pub use homotopy::homotopy_solve;
pub use newton::{newton_step, Damping, NewtonStepInput, StepOutcome};
pub use power_flow::{solve_power_flow, solve_power_flow_with_injection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Largest change of any voltage component in one Newton step, per-unit.
    pub step_limit_v: f64,
    pub homotopy_steps: usize,
    pub smoothing_delta: f64,
    pub epsilon_support: f64,
    pub c_high: f64,
    pub c_low: f64,
    /// Relative threshold of the coefficient update rule.
    pub gamma: f64,
    pub max_toggle_rounds: usize,
    /// Reserved; reactive limits are not enforced.
    pub enforce_q_limits: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_residual: 1e-8,
            max_iters: 200,
            step_limit_v: 0.2,
            homotopy_steps: 8,
            smoothing_delta: 1e-8,
            epsilon_support: 1e-6,
            c_high: 10.0,
            c_low: 0.1,
            gamma: 0.99,
            max_toggle_rounds: 20,
            enforce_q_limits: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_residual", self.tol_residual),
            ("step_limit_v", self.step_limit_v),
            ("smoothing_delta", self.smoothing_delta),
            ("epsilon_support", self.epsilon_support),
            ("c_high", self.c_high),
            ("c_low", self.c_low),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 || self.homotopy_steps == 0 || self.max_toggle_rounds == 0 {
            return Err(Error::InvalidArgument("iteration limits must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.c_low >= self.c_high {
            return Err(Error::InvalidArgument("c_low must be below c_high".into()));
        }
        if self.enforce_q_limits {
            return Err(Error::InvalidArgument(
                "reactive limit enforcement is not supported".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: StateVector,
    pub n: SlackVector,
    pub objective: f64,
    pub iterations: usize,
    pub residual_norm: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}
