//! Scenario sweeps: the coupled multi-period run with a persistency prior,
//! and the independent per-scenario baseline.

use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::{BusId, Scenario, ScenarioSequence};
use crate::circuit::{CircuitAssembly, StateVector};
use crate::error::Result;
use crate::metrics::PersistencyReport;
use crate::solver::SolverConfig;
use crate::sparse::{solve_sparse, SparseSolution, SparsityCoefficients, VulnerabilitySet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    MultiPeriod,
    BaselineSingleScenario,
}

impl Mode {
    pub fn key(self) -> &'static str {
        match self {
            Mode::MultiPeriod => "multi_period",
            Mode::BaselineSingleScenario => "baseline",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub t: usize,
    pub load_factor: f64,
    pub seconds: f64,
    pub solution: std::result::Result<SparseSolution, String>,
    /// Assembly of the scenario, kept for reporting derived quantities.
    pub assembly: Option<CircuitAssembly>,
}

impl ScenarioOutcome {
    pub fn support(&self) -> VulnerabilitySet {
        self.solution
            .as_ref()
            .map(|s| s.support.clone())
            .unwrap_or_default()
    }

    pub fn total_l1(&self) -> f64 {
        self.solution
            .as_ref()
            .map(|s| s.result.n.total_l1())
            .unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug)]
pub struct MultiPeriodResult {
    pub mode: Mode,
    /// One entry per scenario that was attempted. A multi-period run stops at
    /// the first failure, so it may be shorter than the sequence.
    pub scenarios: Vec<ScenarioOutcome>,
    pub requested: usize,
}

impl MultiPeriodResult {
    pub fn complete(&self) -> bool {
        self.scenarios.len() == self.requested && self.scenarios.iter().all(|s| s.solution.is_ok())
    }

    pub fn failure(&self) -> Option<(usize, &str)> {
        self.scenarios
            .iter()
            .find_map(|s| s.solution.as_ref().err().map(|e| (s.t, e.as_str())))
    }

    /// Supports of the converged scenarios, in sequence order.
    pub fn supports(&self) -> Vec<VulnerabilitySet> {
        self.converged().map(|s| s.support()).collect()
    }

    pub fn converged(&self) -> impl Iterator<Item = &ScenarioOutcome> {
        self.scenarios.iter().filter(|s| s.solution.is_ok())
    }

    /// Location → [(t, |n|)] for every step at which it is vulnerable.
    pub fn trajectory(&self) -> BTreeMap<BusId, Vec<(usize, f64)>> {
        let mut out: BTreeMap<BusId, Vec<(usize, f64)>> = BTreeMap::new();
        for s in self.converged() {
            for (&bus, &m) in &s.support().magnitudes {
                out.entry(bus).or_default().push((s.t, m));
            }
        }
        out
    }

    pub fn persistency(&self) -> PersistencyReport {
        let totals: Vec<f64> = self.converged().map(|s| s.total_l1()).collect();
        PersistencyReport::from_sets(&self.supports(), &totals)
    }
}

fn solve_one(
    scenario: &Scenario,
    config: &SolverConfig,
    prior: Option<&SparsityCoefficients>,
    warm: Option<&StateVector>,
) -> ScenarioOutcome {
    let started = Instant::now();
    let (assembly, solution) = match CircuitAssembly::new(&scenario.case) {
        Ok(asm) => {
            let sol = solve_sparse(&asm, config, prior, warm).map_err(|e| e.to_string());
            (Some(asm), sol)
        }
        Err(e) => (None, Err(e.to_string())),
    };
    ScenarioOutcome {
        t: scenario.t,
        load_factor: scenario.load_factor,
        seconds: started.elapsed().as_secs_f64(),
        solution,
        assembly,
    }
}

/// Sequential sweep. Scenario t ≥ 2 starts from scenario t−1's state and pins
/// every location whose final weight there was at most c_low.
pub fn run_multi_period(seq: &ScenarioSequence, config: &SolverConfig) -> Result<MultiPeriodResult> {
    config.validate()?;
    let mut scenarios = Vec::with_capacity(seq.len());
    let mut prior: Option<SparsityCoefficients> = None;
    let mut warm: Option<StateVector> = None;
    for scenario in seq.scenarios() {
        let outcome = solve_one(scenario, config, prior.as_ref(), warm.as_ref());
        info!(
            "multi-period t={} factor={} support={:?} ({:.2}s)",
            outcome.t,
            outcome.load_factor,
            outcome.support().locations,
            outcome.seconds
        );
        let stop = match &outcome.solution {
            Ok(sol) => {
                prior = Some(sol.coefficients.clone());
                warm = Some(sol.result.x.clone());
                false
            }
            Err(_) => true,
        };
        scenarios.push(outcome);
        if stop {
            break;
        }
    }
    Ok(MultiPeriodResult {
        mode: Mode::MultiPeriod,
        scenarios,
        requested: seq.len(),
    })
}

/// Independent solves with no prior and flat starts.
pub fn run_baseline(seq: &ScenarioSequence, config: &SolverConfig) -> Result<MultiPeriodResult> {
    run_baseline_with_jobs(seq, config, 1)
}

/// Baseline over a pool of `jobs` workers. Results do not depend on `jobs`.
pub fn run_baseline_with_jobs(
    seq: &ScenarioSequence,
    config: &SolverConfig,
    jobs: usize,
) -> Result<MultiPeriodResult> {
    config.validate()?;
    let scenarios: Vec<ScenarioOutcome> = if jobs <= 1 {
        seq.scenarios()
            .iter()
            .map(|s| solve_one(s, config, None, None))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(format!("worker pool: {e}")))?;
        pool.install(|| {
            seq.scenarios()
                .par_iter()
                .map(|s| solve_one(s, config, None, None))
                .collect()
        })
    };
    for o in &scenarios {
        info!(
            "baseline t={} factor={} support={:?} ({:.2}s)",
            o.t,
            o.load_factor,
            o.support().locations,
            o.seconds
        );
    }
    Ok(MultiPeriodResult {
        mode: Mode::BaselineSingleScenario,
        scenarios,
        requested: seq.len(),
    })
}
