use log::debug;

use crate::circuit::{CircuitAssembly, SlackVector, StateVector};
use crate::error::{Error, Result};

use super::homotopy::homotopy_from;
use super::kkt::{solve_kkt, Weight};
use super::power_flow::solve_power_flow;
use super::{SolveResult, SolverConfig};

/// Load scales tried, in order, as continuation anchors.
const ANCHORS: [f64; 6] = [0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];

/// Least-norm compensation: min ½‖n‖² s.t. g(x) + n = 0.
///
/// A converged power flow is returned as is (n = 0 is the global minimum).
/// Otherwise tries the warm start, then continuation in a load scale from the
/// largest anchor whose power flow converges, then a flat start.
pub fn solve_dense(
    asm: &CircuitAssembly,
    config: &SolverConfig,
    warm_start: Option<&StateVector>,
) -> Result<SolveResult> {
    let weights = vec![Weight::Soft(0.0); asm.location_count()];
    let flat = asm.flat_start();
    let starts: Vec<&StateVector> = match warm_start {
        Some(w) => vec![w, &flat],
        None => vec![&flat],
    };
    for &start in &starts {
        let pf = solve_power_flow(asm, config, Some(start));
        if pf.converged() {
            return Ok(SolveResult {
                n: SlackVector::zeros(asm.location_count()),
                objective: 0.0,
                ..pf
            });
        }
    }

    let mut last = None;
    let mut attempt = |start: &StateVector| match solve_kkt(asm, &weights, config, start) {
        Ok(r) if r.converged() => Some(r),
        Ok(r) => {
            last = Some((r.iterations, r.residual_norm));
            None
        }
        Err(e) => {
            debug!("dense start rejected: {e}");
            None
        }
    };
    if let Some(r) = warm_start.and_then(&mut attempt) {
        return Ok(r);
    }

    debug!("dense solve falling back to continuation");
    let family = |s: f64| Ok(asm.with_load_scale(s));
    for &anchor in &ANCHORS {
        let scaled = asm.with_load_scale(anchor);
        let pf = solve_power_flow(&scaled, config, None);
        if pf.converged() {
            match homotopy_from(&family, anchor, Some(&pf.x), 1.0, config) {
                Ok(r) => return Ok(r),
                Err(e) => debug!("continuation from {anchor} failed: {e}"),
            }
            break;
        }
    }
    if let Some(r) = attempt(&flat) {
        return Ok(r);
    }
    let (iterations, residual) = last.unwrap_or((0, f64::NAN));
    Err(Error::NoConvergence {
        iterations,
        residual,
    })
}
