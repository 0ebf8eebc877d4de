use crate::circuit::{CircuitAssembly, StateVector};
use crate::error::{Error, Result};

use super::kkt::{solve_kkt, Weight};
use super::{SolveResult, SolverConfig};

const MAX_BISECTIONS: usize = 5;

/// Continuation in the load factor: solves the dense problem at `anchor`, then
/// walks to `target` in `homotopy_steps` geometric increments, warm-starting
/// each point from the previous one. A failing increment is halved (in log
/// space) up to five times before giving up.
pub fn homotopy_solve(
    family: &dyn Fn(f64) -> Result<CircuitAssembly>,
    anchor: f64,
    target: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    homotopy_from(family, anchor, None, target, config)
}

/// As [`homotopy_solve`], with the anchor solve started from `anchor_start`
/// instead of a flat start.
pub(crate) fn homotopy_from(
    family: &dyn Fn(f64) -> Result<CircuitAssembly>,
    anchor: f64,
    anchor_start: Option<&StateVector>,
    target: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    if !(anchor > 0.0 && target > 0.0 && anchor.is_finite() && target.is_finite()) {
        return Err(Error::InvalidArgument("continuation factors must be positive".into()));
    }
    let point = |factor: f64, start: Option<&StateVector>| -> Option<SolveResult> {
        let asm = family(factor).ok()?;
        let weights = vec![Weight::Soft(0.0); asm.location_count()];
        let start = start.cloned().unwrap_or_else(|| asm.flat_start());
        solve_kkt(&asm, &weights, config, &start)
            .ok()
            .filter(|r| r.converged())
    };

    let mut current = anchor;
    let mut sol = point(anchor, anchor_start).ok_or(Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    })?;
    let full = (target / anchor).ln() / config.homotopy_steps as f64;
    let mut log_step = full;
    let mut bisections = 0;
    let mut total = sol.iterations;
    while current != target {
        let mut next = current * log_step.exp();
        if (full > 0.0 && next >= target) || (full < 0.0 && next <= target) {
            next = target;
        }
        match point(next, Some(&sol.x)) {
            Some(r) => {
                total += r.iterations;
                sol = r;
                current = next;
                bisections = 0;
                log_step = full;
            }
            None => {
                bisections += 1;
                if bisections > MAX_BISECTIONS {
                    return Err(Error::NoConvergence {
                        iterations: total,
                        residual: sol.residual_norm,
                    });
                }
                log_step *= 0.5;
            }
        }
    }
    sol.iterations = total;
    Ok(sol)
}
