use crate::error::{Error, Result};
use crate::linalg::{dot, CscMatrix, LinearSolver};

use super::SolverConfig;

const LAMBDA_START: f64 = 1e-8;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e4;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Levenberg damping λ added to the diagonal of the Newton matrix.
#[derive(Clone, Debug)]
pub struct Damping {
    pub lambda: f64,
    pub enabled: bool,
}

impl Default for Damping {
    fn default() -> Self {
        Damping {
            lambda: LAMBDA_START,
            enabled: true,
        }
    }
}

impl Damping {
    pub fn disabled() -> Self {
        Damping {
            lambda: 0.0,
            enabled: false,
        }
    }

    fn accept(&mut self) {
        if self.enabled {
            self.lambda = (self.lambda / 10.0).max(LAMBDA_MIN);
        }
    }

    /// Raises λ; false once the cap is exceeded.
    fn reject(&mut self) -> bool {
        if !self.enabled || self.lambda >= LAMBDA_MAX {
            return false;
        }
        self.lambda = (self.lambda * 10.0).min(LAMBDA_MAX);
        true
    }
}

pub struct NewtonStepInput<'a> {
    pub x: &'a [f64],
    /// Merit value at `x`.
    pub merit: f64,
    /// Gradient of the merit. `None` means the system is a root-finding
    /// Newton system for ½‖R‖², whose directional derivative is −2·merit.
    pub merit_gradient: Option<&'a [f64]>,
    /// Newton matrix as triplets (Hessian, or Jacobian of R).
    pub matrix: &'a [(usize, usize, f64)],
    pub rhs: &'a [f64],
    /// Leading entries of `x` that are voltage components.
    pub voltage_dim: usize,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub x: Vec<f64>,
    pub merit: f64,
    /// Uniform scale applied by voltage limiting.
    pub limit_scale: f64,
    /// Backtracking fraction.
    pub alpha: f64,
}

/// One damped Newton update: solve (M + λI)Δ = rhs, scale Δ so no voltage
/// component moves more than `step_limit_v`, then backtrack until the Armijo
/// condition holds. λ grows on rejection and shrinks on acceptance.
///
/// Returns `Ok(None)` when no acceptable step exists up to the damping cap and
/// `Err(SingularSystem)` when the matrix cannot be factored at the cap.
pub fn newton_step(
    input: &NewtonStepInput<'_>,
    merit_fn: &mut dyn FnMut(&[f64]) -> Option<f64>,
    damping: &mut Damping,
    solver: &mut dyn LinearSolver,
    config: &SolverConfig,
) -> Result<Option<StepOutcome>> {
    let dim = input.x.len();
    loop {
        let mut triplets = Vec::with_capacity(input.matrix.len() + dim);
        triplets.extend_from_slice(input.matrix);
        let lambda = if damping.enabled { damping.lambda } else { 0.0 };
        triplets.extend((0..dim).map(|k| (k, k, lambda)));
        let m = CscMatrix::from_triplets(dim, dim, &triplets);

        let mut delta = match solver.solve(&m, input.rhs) {
            Ok(d) => d,
            Err(Error::SingularSystem) => {
                if damping.reject() {
                    continue;
                }
                return Err(Error::SingularSystem);
            }
            Err(e) => return Err(e),
        };

        let vmax = delta[..input.voltage_dim]
            .iter()
            .fold(0.0f64, |a, d| a.max(d.abs()));
        let scale = if vmax > config.step_limit_v {
            config.step_limit_v / vmax
        } else {
            1.0
        };
        for d in &mut delta {
            *d *= scale;
        }
        let slope = match input.merit_gradient {
            Some(g) => dot(g, &delta),
            None => -2.0 * input.merit * scale,
        };

        if slope < 0.0 || input.merit == 0.0 {
            let mut alpha = 1.0;
            let mut trial = vec![0.0; dim];
            for _ in 0..MAX_HALVINGS {
                for k in 0..dim {
                    trial[k] = input.x[k] + alpha * delta[k];
                }
                if let Some(f) = merit_fn(&trial) {
                    if f.is_finite() && f <= input.merit + ARMIJO_C * alpha * slope {
                        damping.accept();
                        return Ok(Some(StepOutcome {
                            x: trial,
                            merit: f,
                            limit_scale: scale,
                            alpha,
                        }));
                    }
                }
                alpha *= 0.5;
            }
        }
        if !damping.reject() {
            return Ok(None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseLu;

    // f(x) = ½ xᵀAx − bᵀx with A = [[3, 1], [1, 2]], b = (0.1, 0.05).
    fn quadratic(x: &[f64]) -> f64 {
        0.5 * (3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 2.0 * x[1] * x[1]) - 0.1 * x[0] - 0.05 * x[1]
    }

    fn hessian() -> Vec<(usize, usize, f64)> {
        vec![(0, 0, 3.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)]
    }

    #[test]
    fn quadratic_is_solved_in_one_step() {
        let x = [0.0, 0.0];
        let grad = [-0.1, -0.05];
        let rhs = [0.1, 0.05];
        let input = NewtonStepInput {
            x: &x,
            merit: quadratic(&x),
            merit_gradient: Some(&grad),
            matrix: &hessian(),
            rhs: &rhs,
            voltage_dim: 2,
        };
        let out = newton_step(
            &input,
            &mut |z| Some(quadratic(z)),
            &mut Damping::default(),
            &mut DenseLu,
            &SolverConfig::default(),
        )
        .unwrap()
        .unwrap();
        // Exact minimizer A⁻¹b = (0.03, 0.01).
        assert!((out.x[0] - 0.03).abs() < 1e-9);
        assert!((out.x[1] - 0.01).abs() < 1e-9);
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.limit_scale, 1.0);
    }

    #[test]
    fn large_voltage_steps_are_limited() {
        // Root of R(x) = x − (0.5, 0.1): Newton proposes Δ = (0.5, 0.1).
        let x = [0.0, 0.0];
        let r = |z: &[f64]| [z[0] - 0.5, z[1] - 0.1];
        let merit = |z: &[f64]| {
            let v = r(z);
            0.5 * (v[0] * v[0] + v[1] * v[1])
        };
        let rhs = [0.5, 0.1];
        let input = NewtonStepInput {
            x: &x,
            merit: merit(&x),
            merit_gradient: None,
            matrix: &[(0, 0, 1.0), (1, 1, 1.0)],
            rhs: &rhs,
            voltage_dim: 2,
        };
        let out = newton_step(
            &input,
            &mut |z| Some(merit(z)),
            &mut Damping::default(),
            &mut DenseLu,
            &SolverConfig::default(),
        )
        .unwrap()
        .unwrap();
        assert!((out.x[0] - 0.2).abs() < 1e-6);
        assert!((out.x[1] - 0.04).abs() < 1e-6);
        assert!(out.merit < input.merit);
    }

    #[test]
    fn singular_without_damping() {
        let x = [0.0, 0.0];
        let grad = [1.0, 1.0];
        let rhs = [-1.0, -1.0];
        let input = NewtonStepInput {
            x: &x,
            merit: 1.0,
            merit_gradient: Some(&grad),
            matrix: &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
            rhs: &rhs,
            voltage_dim: 2,
        };
        let res = newton_step(
            &input,
            &mut |_| Some(0.0),
            &mut Damping::disabled(),
            &mut DenseLu,
            &SolverConfig::default(),
        );
        assert!(matches!(res, Err(Error::SingularSystem)));
    }

    #[test]
    fn damping_rescues_singular_hessian() {
        let x = [0.0, 0.0];
        let grad = [1.0, 1.0];
        let rhs = [-1.0, -1.0];
        let f = |z: &[f64]| 1.0 + z[0] + z[1] + 0.5 * (z[0] + z[1]).powi(2) + 0.01 * z[0] * z[0];
        let input = NewtonStepInput {
            x: &x,
            merit: f(&x),
            merit_gradient: Some(&grad),
            matrix: &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
            rhs: &rhs,
            voltage_dim: 2,
        };
        let out = newton_step(
            &input,
            &mut |z| Some(f(z)),
            &mut Damping::default(),
            &mut DenseLu,
            &SolverConfig::default(),
        )
        .unwrap()
        .unwrap();
        assert!(out.merit < input.merit);
    }
}
