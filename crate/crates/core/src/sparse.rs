//! Single-scenario sparse diagnosis: least compensation with a weighted
//! per-location magnitude penalty, and adaptive toggling of the weights.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::case::BusId;
use crate::circuit::{CircuitAssembly, SlackVector, StateVector};
use crate::error::{Error, Result};
use crate::solver::kkt::{solve_kkt, Weight};
use crate::solver::{solve_dense, solve_power_flow_with_injection, SolveResult, SolverConfig};

/// Per-location weights, one per compensable bus in ascending id order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityCoefficients {
    pub c: Vec<f64>,
}

impl SparsityCoefficients {
    pub fn uniform(locations: usize, value: f64) -> Self {
        SparsityCoefficients {
            c: vec![value; locations],
        }
    }

    /// Locations whose weight is at most `c_low`.
    pub fn low_locations(&self, c_low: f64) -> Vec<usize> {
        (0..self.c.len()).filter(|&l| self.c[l] <= c_low).collect()
    }

    fn pin(&mut self, pins: &[usize], config: &SolverConfig) {
        for &l in pins {
            self.c[l] = 0.5 * config.c_low;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilitySet {
    pub locations: BTreeSet<BusId>,
    pub magnitudes: BTreeMap<BusId, f64>,
}

impl VulnerabilitySet {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn contains(&self, bus: BusId) -> bool {
        self.locations.contains(&bus)
    }

    pub fn from_ids(ids: impl IntoIterator<Item = BusId>) -> Self {
        let locations: BTreeSet<BusId> = ids.into_iter().collect();
        let magnitudes = locations.iter().map(|&b| (b, 1.0)).collect();
        VulnerabilitySet {
            locations,
            magnitudes,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SparseSolution {
    pub result: SolveResult,
    pub support: VulnerabilitySet,
    pub coefficients: SparsityCoefficients,
    pub toggle_rounds: usize,
    /// Support size of the dense initialization.
    pub dense_support_size: usize,
}

/// Locations with |n_l| > epsilon (strict).
pub fn extract_support(locations: &[BusId], n: &SlackVector, epsilon: f64) -> VulnerabilitySet {
    let mut set = VulnerabilitySet::default();
    for (l, &bus) in locations.iter().enumerate() {
        let m = n.magnitude(l);
        if m > epsilon {
            set.locations.insert(bus);
            set.magnitudes.insert(bus, m);
        }
    }
    set
}

/// Threshold rule: locations carrying at least `gamma` of the largest slack
/// get `c_low`, the rest `c_high`. Pinned locations (below `c_low`) keep
/// their weight.
pub fn update_coefficients(
    n: &SlackVector,
    current: &SparsityCoefficients,
    gamma: f64,
    config: &SolverConfig,
) -> Result<SparsityCoefficients> {
    assert_eq!(n.locations(), current.c.len());
    let mags = n.magnitudes();
    let max = mags.iter().copied().fold(0.0, f64::max);
    if max <= config.epsilon_support {
        return Err(Error::AllZeroSlack);
    }
    let c = mags
        .iter()
        .zip(&current.c)
        .map(|(&m, &old)| {
            if old < config.c_low {
                old
            } else if m >= gamma * max && m > config.epsilon_support {
                config.c_low
            } else {
                config.c_high
            }
        })
        .collect();
    Ok(SparsityCoefficients { c })
}

/// Minimizes ½‖n‖² + Σ c_l·sqrt(|n_l|² + δ²) subject to g(x) + n = 0.
pub fn solve_sparse_inner(
    asm: &CircuitAssembly,
    coefficients: &SparsityCoefficients,
    config: &SolverConfig,
    warm_start: Option<&StateVector>,
) -> Result<SolveResult> {
    assert_eq!(coefficients.c.len(), asm.location_count());
    let weights: Vec<Weight> = coefficients.c.iter().map(|&c| Weight::Soft(c)).collect();
    let start = warm_start.cloned().unwrap_or_else(|| asm.flat_start());
    let res = solve_kkt(asm, &weights, config, &start)?;
    if res.converged() {
        Ok(res)
    } else {
        Err(Error::NoConvergence {
            iterations: res.iterations,
            residual: res.residual_norm,
        })
    }
}

/// Largest Newton iteration count for one intermediate point of a weight
/// continuation path.
const PATH_STEP_ITERS: usize = 40;
const PATH_MIN_STEP: f64 = 1.0 / 256.0;

/// Solves with `to`, continuing from a point `start` that solves the problem
/// with weights `from`. Tries the target directly, then walks the weights
/// linearly from `from` to `to`, halving the increment on failure.
fn solve_weight_path(
    asm: &CircuitAssembly,
    from: &[f64],
    to: &SparsityCoefficients,
    config: &SolverConfig,
    start: &StateVector,
) -> Result<SolveResult> {
    let direct = solve_sparse_inner(asm, to, config, Some(start));
    if direct.is_ok() {
        return direct;
    }
    let step_config = SolverConfig {
        max_iters: config.max_iters.min(PATH_STEP_ITERS),
        ..config.clone()
    };
    let mut s = 0.0;
    let mut step = 1.0 / config.homotopy_steps as f64;
    let mut x = start.clone();
    let mut last = direct;
    while s < 1.0 {
        let next = (s + step).min(1.0);
        let c = SparsityCoefficients {
            c: from.iter().zip(&to.c).map(|(a, b)| a + next * (b - a)).collect(),
        };
        let cfg = if next < 1.0 { &step_config } else { config };
        match solve_sparse_inner(asm, &c, cfg, Some(&x)) {
            Ok(r) => {
                s = next;
                x = r.x.clone();
                step = (2.0 * step).min(1.0 - s).max(PATH_MIN_STEP);
                last = Ok(r);
            }
            Err(e) => {
                step *= 0.5;
                if step < PATH_MIN_STEP {
                    return Err(e);
                }
            }
        }
    }
    last
}

/// Dense initialization followed by rounds of coefficient toggling. `prior`
/// holds the previous scenario's final coefficients; locations where it is at
/// most `c_low` are pinned at `0.5·c_low` for the whole solve.
pub fn solve_sparse(
    asm: &CircuitAssembly,
    config: &SolverConfig,
    prior: Option<&SparsityCoefficients>,
    warm_start: Option<&StateVector>,
) -> Result<SparseSolution> {
    let sol = solve_sparse_from(asm, config, prior, warm_start)?;
    if warm_start.is_none() || sol.toggle_rounds > 0 || sol.support.is_empty() {
        return Ok(sol);
    }
    debug!("toggling made no progress from the warm start; retrying cold");
    let cold = solve_sparse_from(asm, config, prior, None)?;
    Ok(if cold.toggle_rounds > 0 { cold } else { sol })
}

fn solve_sparse_from(
    asm: &CircuitAssembly,
    config: &SolverConfig,
    prior: Option<&SparsityCoefficients>,
    warm_start: Option<&StateVector>,
) -> Result<SparseSolution> {
    let locations = asm.compensable();
    let pins = prior.map(|p| p.low_locations(config.c_low)).unwrap_or_default();
    let mut coefficients = SparsityCoefficients::uniform(locations.len(), config.c_high);
    coefficients.pin(&pins, config);

    let dense = solve_dense(asm, config, warm_start)?;
    let dense_support = extract_support(&locations, &dense.n, config.epsilon_support);
    let dense_support_size = dense_support.len();
    if dense.n.max_magnitude() <= config.epsilon_support {
        return Ok(SparseSolution {
            support: dense_support,
            result: dense,
            coefficients,
            toggle_rounds: 0,
            dense_support_size,
        });
    }

    let mut candidates: Vec<(SolveResult, VulnerabilitySet, SparsityCoefficients)> = Vec::new();
    let mut history: Vec<BTreeSet<BusId>> = vec![dense_support.locations.clone()];
    let mut prev_n = dense.n.clone();
    let mut prev_x = dense.x.clone();
    let mut prev_size = dense_support_size;
    // Weights that `prev_x` is optimal for; the dense solve has none.
    let mut prev_c = vec![0.0; locations.len()];
    let mut rounds = 0;
    for round in 1..=config.max_toggle_rounds {
        let mut next = match update_coefficients(&prev_n, &coefficients, config.gamma, config) {
            Ok(c) => c,
            Err(Error::AllZeroSlack) => break,
            Err(e) => return Err(e),
        };
        let unpinned = next.clone();
        next.pin(&pins, config);
        let mut inner = solve_weight_path(asm, &prev_c, &next, config, &prev_x);
        if inner.is_err() && !pins.is_empty() {
            // Reach the pinned weights through the unpinned problem.
            debug!("toggling round {round}: retrying through unpinned weights");
            inner = solve_weight_path(asm, &prev_c, &unpinned, config, &prev_x)
                .and_then(|r| solve_weight_path(asm, &unpinned.c, &next, config, &r.x));
        }
        let inner = match inner {
            Ok(r) => r,
            Err(e) => {
                debug!("toggling round {round} failed ({e}); keeping previous coefficients");
                break;
            }
        };
        rounds = round;
        coefficients = next;
        let support = extract_support(&locations, &inner.n, config.epsilon_support);
        debug!("round {round}: support {:?}", support.locations);
        let size = support.len();
        let repeated = history.contains(&support.locations);
        history.push(support.locations.clone());
        prev_n = inner.n.clone();
        prev_x = inner.x.clone();
        prev_c = coefficients.c.clone();
        candidates.push((inner, support, coefficients.clone()));
        if size >= prev_size || repeated {
            break;
        }
        prev_size = size;
    }

    let best = candidates.into_iter().min_by(|a, b| {
        (a.1.len(), a.0.n.total_l1())
            .partial_cmp(&(b.1.len(), b.0.n.total_l1()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(match best {
        Some((result, support, coefficients)) if support.len() <= dense_support_size => {
            SparseSolution {
                result,
                support,
                coefficients,
                toggle_rounds: rounds,
                dense_support_size,
            }
        }
        _ => SparseSolution {
            result: dense,
            support: dense_support,
            coefficients,
            toggle_rounds: rounds,
            dense_support_size,
        },
    })
}

/// Re-solves the plain power flow with the returned compensation held fixed
/// at the support locations and zero elsewhere. Starts flat, then from the
/// optimizer's state.
pub fn replay_support(asm: &CircuitAssembly, solution: &SparseSolution, config: &SolverConfig) -> SolveResult {
    let mut injection = solution.result.n.clone();
    for (l, bus) in asm.compensable().into_iter().enumerate() {
        if !solution.support.contains(bus) {
            injection.0[2 * l] = 0.0;
            injection.0[2 * l + 1] = 0.0;
        }
    }
    let flat = solve_power_flow_with_injection(asm, &injection, config, None);
    if flat.converged() {
        return flat;
    }
    solve_power_flow_with_injection(asm, &injection, config, Some(&solution.result.x))
}
