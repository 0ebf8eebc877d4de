//! Primal-dual Newton on the stationarity conditions of
//!
//!   min Σ_l φ_l(n_l)  s.t.  g(x) + n = 0,
//!
//! where each compensable location is either soft, with
//! φ_l(n) = ½|n|² + c_l·sqrt(|n|² + δ²), or hard (n_l forced to zero).
//!
//! Unknowns are (x, μ). Equations: Jᵀμ = 0, plus per row
//! soft: ρ·μ − g = 0 with ρ = m/(m + c), m = sqrt(|g_l|² + δ²);
//! hard and non-balance rows: g = 0.
//! The soft rows encode μ = ∇φ(g), written so they stay well scaled as g → 0.

use crate::circuit::{CircuitAssembly, SlackVector, StateVector, COLLAPSE_MAGNITUDE};
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, SparseLu};

use super::newton::{newton_step, Damping, NewtonStepInput};
use super::{SolveResult, SolveStatus, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Weight {
    /// Compensation allowed with linear weight c ≥ 0.
    Soft(f64),
    /// No compensation at this location.
    Hard,
}

pub(crate) struct KktSystem<'a> {
    asm: &'a CircuitAssembly,
    weights: &'a [Weight],
    delta: f64,
}

impl<'a> KktSystem<'a> {
    pub(crate) fn new(asm: &'a CircuitAssembly, weights: &'a [Weight], delta: f64) -> Self {
        assert_eq!(weights.len(), asm.location_count());
        KktSystem {
            asm,
            weights,
            delta,
        }
    }

    fn dim(&self) -> usize {
        self.asm.state_dim()
    }

    fn collapsed(&self, x: &[f64]) -> bool {
        (0..self.asm.bus_count()).any(|p| !(x[2 * p].hypot(x[2 * p + 1]) >= COLLAPSE_MAGNITUDE))
    }

    fn group(&self, g: &[f64], l: usize) -> (f64, f64, f64) {
        let (gr, gi) = (g[2 * l], g[2 * l + 1]);
        (gr, gi, (gr * gr + gi * gi + self.delta * self.delta).sqrt())
    }

    /// Multipliers consistent with the soft rows at `x`.
    fn initial_multipliers(&self, x: &StateVector) -> Vec<f64> {
        let g = self.asm.mismatch(x);
        let mut mu = vec![0.0; self.dim()];
        for (l, w) in self.weights.iter().enumerate() {
            if let Weight::Soft(c) = *w {
                let (gr, gi, m) = self.group(&g, l);
                mu[2 * l] = gr * (1.0 + c / m);
                mu[2 * l + 1] = gi * (1.0 + c / m);
            }
        }
        mu
    }

    pub(crate) fn residual(&self, z: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim();
        let (x, mu) = z.split_at(d);
        if self.collapsed(x) {
            return None;
        }
        let xs = StateVector(x.to_vec());
        let g = self.asm.mismatch(&xs);
        let j = self.asm.jacobian(&xs).ok()?;
        let mut r = j.tr_mul_vec(mu);
        r.extend_from_slice(&g);
        for (l, w) in self.weights.iter().enumerate() {
            if let Weight::Soft(c) = *w {
                let (gr, gi, m) = self.group(&g, l);
                let rho = m / (m + c);
                r[d + 2 * l] = rho * mu[2 * l] - gr;
                r[d + 2 * l + 1] = rho * mu[2 * l + 1] - gi;
            }
        }
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    pub(crate) fn jacobian(&self, z: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        let d = self.dim();
        let (x, mu) = z.split_at(d);
        let xs = StateVector(x.to_vec());
        let g = self.asm.mismatch(&xs);
        let jt = self.asm.jacobian_triplets(&xs)?;
        let mut t = self.asm.hessian_contraction(&xs, mu)?;
        t.reserve(3 * jt.len() + d);

        // ∂R1/∂μ = Jᵀ
        for &(r, c, v) in &jt {
            t.push((c, d + r, v));
        }

        // Per-row mixing E for the soft pairs: dR2/dg = μ·(∂ρ/∂g) − I.
        let mut mix: Vec<Option<[[f64; 2]; 2]>> = vec![None; self.asm.location_count()];
        for (l, w) in self.weights.iter().enumerate() {
            if let Weight::Soft(c) = *w {
                let (gr, gi, m) = self.group(&g, l);
                let k = c / ((m + c) * (m + c) * m);
                let (mr, mi) = (mu[2 * l], mu[2 * l + 1]);
                mix[l] = Some([[mr * k * gr - 1.0, mr * k * gi], [mi * k * gr, mi * k * gi - 1.0]]);
                let rho = m / (m + c);
                t.push((d + 2 * l, d + 2 * l, rho));
                t.push((d + 2 * l + 1, d + 2 * l + 1, rho));
            }
        }
        for &(r, c, v) in &jt {
            if self.asm.is_kcl_row(r) {
                let l = r / 2;
                if let Some(e) = mix[l] {
                    let b = r % 2;
                    t.push((d + 2 * l, c, e[0][b] * v));
                    t.push((d + 2 * l + 1, c, e[1][b] * v));
                    continue;
                }
            }
            t.push((d + r, c, v));
        }
        Ok(t)
    }

    pub(crate) fn slack_of(&self, x: &StateVector) -> SlackVector {
        let mut n = self.asm.implied_slack(x);
        for (l, w) in self.weights.iter().enumerate() {
            if *w == Weight::Hard {
                n.0[2 * l] = 0.0;
                n.0[2 * l + 1] = 0.0;
            }
        }
        n
    }

    /// Unsmoothed objective ½‖n‖² + Σ c_l·|n_l| over the soft locations.
    pub(crate) fn objective(&self, n: &SlackVector) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(l, w)| match *w {
                Weight::Soft(c) => {
                    let a = n.magnitude(l);
                    0.5 * a * a + c * a
                }
                Weight::Hard => 0.0,
            })
            .sum()
    }
}

/// Runs the primal-dual Newton iteration from `start`.
pub(crate) fn solve_kkt(
    asm: &CircuitAssembly,
    weights: &[Weight],
    config: &SolverConfig,
    start: &StateVector,
) -> Result<SolveResult> {
    let sys = KktSystem::new(asm, weights, config.smoothing_delta);
    let d = asm.state_dim();
    let mut z = start.0.clone();
    z.extend(sys.initial_multipliers(start));
    asm.jacobian(start)?;
    let mut r = sys.residual(&z).ok_or(Error::SingularSystem)?;
    let mut merit = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let mut damping = Damping::default();
    let mut solver = SparseLu::new();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;

    while iterations < config.max_iters {
        if norm_inf(&r) <= config.tol_residual {
            status = SolveStatus::Converged;
            break;
        }
        let jac = sys.jacobian(&z)?;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let input = NewtonStepInput {
            x: &z,
            merit,
            merit_gradient: None,
            matrix: &jac,
            rhs: &rhs,
            voltage_dim: asm.voltage_dim(),
        };
        let mut eval = |trial: &[f64]| {
            sys.residual(trial)
                .map(|rr| 0.5 * rr.iter().map(|v| v * v).sum::<f64>())
        };
        let step = match newton_step(&input, &mut eval, &mut damping, &mut solver, config) {
            Ok(Some(s)) => s,
            Ok(None) | Err(Error::SingularSystem) => {
                status = SolveStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        z = step.x;
        r = sys.residual(&z).expect("accepted step has a finite residual");
        merit = step.merit;
    }
    if status == SolveStatus::MaxIters && norm_inf(&r) <= config.tol_residual {
        status = SolveStatus::Converged;
    }

    let x = StateVector(z[..d].to_vec());
    let n = sys.slack_of(&x);
    Ok(SolveResult {
        status,
        objective: sys.objective(&n),
        n,
        x,
        iterations,
        residual_norm: norm_inf(&r),
    })
}

/// Dense Jacobian of the KKT system, for tests.
#[cfg(test)]
pub(crate) fn dense_jacobian(sys: &KktSystem<'_>, z: &[f64]) -> Vec<Vec<f64>> {
    let n = z.len();
    crate::linalg::CscMatrix::from_triplets(n, n, &sys.jacobian(z).unwrap()).to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::*;
    use crate::case::{BusKind, NetworkCase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh() -> NetworkCase {
        let mut g2 = slack_gen(2);
        g2.p_set = 0.3;
        NetworkCase::new(
            "mesh",
            100.0,
            vec![
                bus(1, BusKind::Slack, 0.0, 0.0),
                bus(2, BusKind::Pv, 0.1, 0.0),
                bus(3, BusKind::Pq, 0.8, 0.3),
                bus(4, BusKind::Pq, 0.5, 0.2),
            ],
            vec![
                line(1, 2, 0.02, 0.2),
                line(2, 3, 0.03, 0.3),
                line(3, 4, 0.02, 0.25),
                line(1, 4, 0.04, 0.4),
            ],
            vec![slack_gen(1), g2],
        )
        .unwrap()
    }

    #[test]
    fn kkt_jacobian_matches_differences() {
        let asm = CircuitAssembly::new(&mesh()).unwrap();
        let weights = [Weight::Soft(0.7), Weight::Hard, Weight::Soft(0.0)];
        let sys = KktSystem::new(&asm, &weights, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mut z: Vec<f64> = asm.flat_start().0;
            for v in z.iter_mut().take(asm.voltage_dim()) {
                *v += rng.gen_range(-0.2..0.2);
            }
            z.extend((0..asm.state_dim()).map(|_| rng.gen_range(-1.0..1.0)));
            let jac = dense_jacobian(&sys, &z);
            let h = 1e-6;
            for c in 0..z.len() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[c] += h;
                zm[c] -= h;
                let (rp, rm) = (sys.residual(&zp).unwrap(), sys.residual(&zm).unwrap());
                for r in 0..z.len() {
                    let fd = (rp[r] - rm[r]) / (2.0 * h);
                    assert!(
                        (fd - jac[r][c]).abs() < 1e-5 * (1.0 + fd.abs()),
                        "entry ({r}, {c}): fd {fd} vs {}",
                        jac[r][c]
                    );
                }
            }
        }
    }

    #[test]
    fn feasible_case_gives_zero_slack() {
        let asm = CircuitAssembly::new(&mesh()).unwrap();
        let weights = vec![Weight::Soft(0.0); asm.location_count()];
        let res = solve_kkt(&asm, &weights, &SolverConfig::default(), &asm.flat_start()).unwrap();
        assert!(res.converged(), "{res:?}");
        assert!(res.n.max_magnitude() < 1e-8);
    }
}
