//! Exhaustive minimum-cardinality compensation search for tiny networks.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::BusId;
use crate::circuit::{CircuitAssembly, SlackVector, StateVector};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::solver::kkt::{solve_kkt, Weight};
use crate::solver::{solve_dense, SolverConfig};

pub const MAX_ORACLE_LOCATIONS: usize = 12;
pub const MAX_ORACLE_CARDINALITY: usize = 4;
const PERTURBATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub support: Vec<BusId>,
    /// ‖n‖₂ of the least-norm compensation restricted to `support`.
    pub n_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub min_cardinality: usize,
    pub witnesses: Vec<Witness>,
}

/// Least-norm compensation with n forced to zero outside `support`. Feasible
/// when the restricted problem converges, which forces every masked balance
/// row below the tolerance. A failed solve is retried once from a start
/// shifted by +1e-3 in every component; non-convergence of both counts as
/// infeasible.
pub fn restricted_feasibility_check(
    asm: &CircuitAssembly,
    support: &BTreeSet<BusId>,
    config: &SolverConfig,
    start: Option<&StateVector>,
) -> Result<(bool, SlackVector)> {
    let ids = asm.compensable();
    for bus in support {
        if !ids.contains(bus) {
            return Err(Error::InvalidArgument(format!("bus {bus} is not compensable")));
        }
    }
    let weights: Vec<Weight> = ids
        .iter()
        .map(|b| if support.contains(b) { Weight::Soft(0.0) } else { Weight::Hard })
        .collect();
    let base = start.cloned().unwrap_or_else(|| asm.flat_start());
    let shifted = StateVector(base.0.iter().map(|v| v + PERTURBATION).collect());
    for s in [&base, &shifted] {
        if let Ok(r) = solve_kkt(asm, &weights, config, s) {
            if r.converged() {
                return Ok((true, r.n));
            }
        }
    }
    Ok((false, SlackVector::zeros(ids.len())))
}

/// Enumerates supports by increasing size (lexicographic by bus id within a
/// size) and returns every feasible support of the smallest feasible size.
pub fn min_support_bruteforce(
    asm: &CircuitAssembly,
    max_card: usize,
    config: &SolverConfig,
) -> Result<OracleResult> {
    let ids = asm.compensable();
    if ids.len() > MAX_ORACLE_LOCATIONS {
        return Err(Error::InvalidArgument(format!(
            "{} compensable locations exceed the oracle limit of {MAX_ORACLE_LOCATIONS}",
            ids.len()
        )));
    }
    if max_card > MAX_ORACLE_CARDINALITY {
        return Err(Error::InvalidArgument(format!(
            "max_card {max_card} exceeds {MAX_ORACLE_CARDINALITY}"
        )));
    }
    // Start every restricted solve from the least-norm full-support point.
    let start = solve_dense(asm, config, None).ok().map(|r| r.x);

    for k in 0..=max_card.min(ids.len()) {
        let combos = combinations(ids.len(), k);
        let verdicts: Vec<Option<Witness>> = combos
            .par_iter()
            .map(|combo| {
                let support: BTreeSet<BusId> = combo.iter().map(|&l| ids[l]).collect();
                match restricted_feasibility_check(asm, &support, config, start.as_ref()) {
                    Ok((true, n)) => Some(Witness {
                        support: support.into_iter().collect(),
                        n_norm: norm2(&n.0),
                    }),
                    _ => None,
                }
            })
            .collect();
        let witnesses: Vec<Witness> = verdicts.into_iter().flatten().collect();
        if !witnesses.is_empty() {
            return Ok(OracleResult {
                min_cardinality: k,
                witnesses,
            });
        }
    }
    Err(Error::CardinalityExceeded { max_card })
}

/// All k-subsets of 0..n in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}
