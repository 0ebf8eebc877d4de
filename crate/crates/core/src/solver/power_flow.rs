use crate::circuit::{CircuitAssembly, SlackVector, StateVector, COLLAPSE_MAGNITUDE};
use crate::error::Error;
use crate::linalg::{norm2, norm_inf, LinearSolver, SparseLu};

use super::{SolveResult, SolveStatus, SolverConfig};

const DIVERGENCE_GROWTH: f64 = 10.0;
const DIVERGENCE_STREAK: usize = 5;
const COLLAPSE_HALVINGS: usize = 10;

/// Newton–Raphson power flow with n ≡ 0. No line search: a collapsed case is
/// expected to diverge, and that divergence is the signal.
pub fn solve_power_flow(
    asm: &CircuitAssembly,
    config: &SolverConfig,
    warm_start: Option<&StateVector>,
) -> SolveResult {
    let zero = SlackVector::zeros(asm.location_count());
    solve_power_flow_with_injection(asm, &zero, config, warm_start)
}

/// Power flow with `injection` held fixed as constant extra currents on the
/// balance rows (used to replay a compensation pattern).
pub fn solve_power_flow_with_injection(
    asm: &CircuitAssembly,
    injection: &SlackVector,
    config: &SolverConfig,
    warm_start: Option<&StateVector>,
) -> SolveResult {
    let mut x = warm_start.cloned().unwrap_or_else(|| asm.flat_start());
    let mut g = asm.residual(&x, injection);
    let mut solver = SparseLu::new();
    let mut best = norm2(&g);
    let mut streak = 0;
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIters;

    loop {
        let res = norm_inf(&g);
        if res.is_finite() && res <= config.tol_residual {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
        let jac = match asm.jacobian(&x) {
            Ok(j) => j,
            Err(_) => {
                status = SolveStatus::Diverged;
                break;
            }
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut delta = match solver.solve(&jac, &rhs) {
            Ok(d) => d,
            Err(Error::SingularSystem) | Err(_) => {
                status = SolveStatus::Diverged;
                break;
            }
        };
        let vmax = norm_inf(&delta[..asm.voltage_dim()]);
        if vmax > config.step_limit_v {
            let s = config.step_limit_v / vmax;
            delta.iter_mut().for_each(|d| *d *= s);
        }
        // Back off if the step lands on the origin of some bus voltage.
        let mut next = x.clone();
        for _ in 0..COLLAPSE_HALVINGS {
            for (k, d) in delta.iter().enumerate() {
                next.0[k] = x.0[k] + d;
            }
            let ok = (0..asm.bus_count())
                .all(|p| next.0[2 * p].hypot(next.0[2 * p + 1]) >= COLLAPSE_MAGNITUDE);
            if ok {
                break;
            }
            delta.iter_mut().for_each(|d| *d *= 0.5);
        }
        x = next;
        g = asm.residual(&x, injection);
        iterations += 1;

        let norm = norm2(&g);
        if !norm.is_finite() {
            status = SolveStatus::Diverged;
            break;
        }
        if norm > DIVERGENCE_GROWTH * best {
            streak += 1;
            if streak >= DIVERGENCE_STREAK {
                status = SolveStatus::Diverged;
                break;
            }
        } else {
            streak = 0;
        }
        best = best.min(norm);
    }

    let residual_norm = norm_inf(&g);
    SolveResult {
        status,
        x,
        n: injection.clone(),
        objective: 0.0,
        iterations,
        residual_norm,
    }
}
