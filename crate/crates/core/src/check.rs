//! Finite-difference checks of the analytic derivatives.

use crate::circuit::{CircuitAssembly, StateVector};

/// ‖J_fd − J‖_F / max(‖J‖_F, 1) with central differences of size `step`.
pub fn jacobian_fd_error(asm: &CircuitAssembly, x: &StateVector, j: &[Vec<f64>], step: f64) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    for c in 0..asm.state_dim() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.0[c] += step;
        xm.0[c] -= step;
        let gp = asm.mismatch(&xp);
        let gm = asm.mismatch(&xm);
        for r in 0..asm.residual_dim() {
            let fd = (gp[r] - gm[r]) / (2.0 * step);
            diff += (fd - j[r][c]).powi(2);
            norm += j[r][c].powi(2);
        }
    }
    diff.sqrt() / norm.sqrt().max(1.0)
}

/// Relative error of Jᵀg against central differences of ½‖g‖².
pub fn gradient_fd_error(asm: &CircuitAssembly, x: &StateVector, step: f64) -> f64 {
    let grad = match asm.least_squares_gradient(x) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let f = |x: &StateVector| 0.5 * asm.mismatch(x).iter().map(|v| v * v).sum::<f64>();
    let (mut diff, mut norm) = (0.0, 0.0);
    for c in 0..asm.state_dim() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.0[c] += step;
        xm.0[c] -= step;
        let fd = (f(&xp) - f(&xm)) / (2.0 * step);
        diff += (fd - grad[c]).powi(2);
        norm += grad[c].powi(2);
    }
    diff.sqrt() / norm.sqrt().max(1.0)
}
