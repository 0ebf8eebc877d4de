//! Versioned JSON run report and the CSV views derived from it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case::{BusId, LoadScaling, NetworkCase};
use crate::error::{Error, Result};
use crate::metrics::PersistencyReport;
use crate::multi_period::{Mode, MultiPeriodResult, ScenarioOutcome};
use crate::solver::SolverConfig;
use crate::sparse::VulnerabilitySet;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub metadata: RunMetadata,
    /// Keyed by mode name (`multi_period`, `baseline`).
    pub modes: BTreeMap<String, ModeReport>,
    pub comparison: Option<Vec<ComparisonRow>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub case_name: String,
    pub bus_count: usize,
    pub base_mva: f64,
    pub factors: Vec<f64>,
    pub config: SolverConfig,
    pub bus_scaling: BTreeMap<BusId, f64>,
    pub scale_generation: bool,
    /// SHA-256 over the case, factors, scaling and solver settings.
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub requested_scenarios: usize,
    pub complete: bool,
    pub scenarios: Vec<ScenarioReport>,
    /// Computed over the converged scenarios, in order.
    pub persistency: PersistencyReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub t: usize,
    pub load_factor: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
    pub support: Vec<BusId>,
    pub magnitudes: Vec<LocationMagnitude>,
    pub total_l1: f64,
    pub stats: Option<SolverStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationMagnitude {
    pub location: BusId,
    /// |n_i| in per-unit current.
    pub magnitude_pu: f64,
    /// |n_i|·|V_i|·base_mva.
    pub mva_equivalent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub residual_norm: f64,
    pub objective: f64,
    pub toggle_rounds: usize,
    pub dense_support_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: usize,
    pub load_factor: f64,
    pub multi_period_support_size: Option<usize>,
    pub baseline_support_size: Option<usize>,
    pub multi_period_total_l1: Option<f64>,
    pub baseline_total_l1: Option<f64>,
}

pub fn config_hash(case: &NetworkCase, factors: &[f64], scaling: &LoadScaling, config: &SolverConfig) -> String {
    let payload = serde_json::json!({
        "case": case,
        "factors": factors,
        "bus_scaling": scaling.bus_factors,
        "scale_generation": scaling.scale_generation,
        "config": config,
    });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn scenario_report(o: &ScenarioOutcome) -> ScenarioReport {
    match &o.solution {
        Ok(sol) => {
            let magnitudes = match &o.assembly {
                Some(asm) => asm
                    .compensable()
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| sol.support.contains(**b))
                    .map(|(l, &b)| LocationMagnitude {
                        location: b,
                        magnitude_pu: sol.result.n.magnitude(l),
                        mva_equivalent: asm.mva_equivalent(&sol.result.x, &sol.result.n, l),
                    })
                    .collect(),
                None => Vec::new(),
            };
            ScenarioReport {
                t: o.t,
                load_factor: o.load_factor,
                converged: true,
                error: None,
                wall_clock_seconds: o.seconds,
                support: sol.support.locations.iter().copied().collect(),
                magnitudes,
                total_l1: sol.result.n.total_l1(),
                stats: Some(SolverStats {
                    iterations: sol.result.iterations,
                    residual_norm: sol.result.residual_norm,
                    objective: sol.result.objective,
                    toggle_rounds: sol.toggle_rounds,
                    dense_support_size: sol.dense_support_size,
                }),
            }
        }
        Err(e) => ScenarioReport {
            t: o.t,
            load_factor: o.load_factor,
            converged: false,
            error: Some(e.clone()),
            wall_clock_seconds: o.seconds,
            support: Vec::new(),
            magnitudes: Vec::new(),
            total_l1: 0.0,
            stats: None,
        },
    }
}

impl ModeReport {
    pub fn from_result(r: &MultiPeriodResult) -> Self {
        ModeReport {
            requested_scenarios: r.requested,
            complete: r.complete(),
            scenarios: r.scenarios.iter().map(scenario_report).collect(),
            persistency: r.persistency(),
        }
    }

    /// Supports of the converged scenarios, rebuilt from the stored fields.
    pub fn supports(&self) -> Vec<VulnerabilitySet> {
        self.scenarios
            .iter()
            .filter(|s| s.converged)
            .map(|s| VulnerabilitySet {
                locations: s.support.iter().copied().collect(),
                magnitudes: s.magnitudes.iter().map(|m| (m.location, m.magnitude_pu)).collect(),
            })
            .collect()
    }

    /// Persistency recomputed from the per-scenario records.
    pub fn recompute_persistency(&self) -> PersistencyReport {
        let totals: Vec<f64> = self
            .scenarios
            .iter()
            .filter(|s| s.converged)
            .map(|s| s.total_l1)
            .collect();
        PersistencyReport::from_sets(&self.supports(), &totals)
    }

    pub fn converged_scenarios(&self) -> impl Iterator<Item = &ScenarioReport> {
        self.scenarios.iter().filter(|s| s.converged)
    }
}

impl ReportDocument {
    pub fn build(metadata: RunMetadata, results: &[MultiPeriodResult]) -> Self {
        let modes: BTreeMap<String, ModeReport> = results
            .iter()
            .map(|r| (r.mode.key().to_string(), ModeReport::from_result(r)))
            .collect();
        let comparison = match (
            modes.get(Mode::MultiPeriod.key()),
            modes.get(Mode::BaselineSingleScenario.key()),
        ) {
            (Some(mp), Some(bl)) => Some(compare(&metadata.factors, mp, bl)),
            _ => None,
        };
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            metadata,
            modes,
            comparison,
        }
    }

    pub fn mode(&self, mode: Mode) -> Result<&ModeReport> {
        self.modes
            .get(mode.key())
            .ok_or_else(|| Error::MissingMode(mode.key().to_string()))
    }

    /// The requested mode, or the only one present.
    pub fn mode_or_default(&self, mode: Option<Mode>) -> Result<(Mode, &ModeReport)> {
        let mode = match mode {
            Some(m) => m,
            None if self.modes.contains_key(Mode::MultiPeriod.key()) => Mode::MultiPeriod,
            None => Mode::BaselineSingleScenario,
        };
        Ok((mode, self.mode(mode)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64());
        if found != Some(SCHEMA_VERSION as u64) {
            return Err(Error::SchemaMismatch {
                found: found.map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn compare(factors: &[f64], mp: &ModeReport, bl: &ModeReport) -> Vec<ComparisonRow> {
    let find = |m: &ModeReport, t: usize| m.scenarios.iter().find(|s| s.t == t && s.converged).cloned();
    factors
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let (a, b) = (find(mp, i + 1), find(bl, i + 1));
            ComparisonRow {
                t: i + 1,
                load_factor: f,
                multi_period_support_size: a.as_ref().map(|s| s.support.len()),
                baseline_support_size: b.as_ref().map(|s| s.support.len()),
                multi_period_total_l1: a.map(|s| s.total_l1),
                baseline_total_l1: b.map(|s| s.total_l1),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Trajectory,
    SetPersistency,
    SparsityCompare,
    Runtime,
}

impl Figure {
    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Trajectory => "trajectory.csv",
            Figure::SetPersistency => "set_persistency_series.csv",
            Figure::SparsityCompare => "sparsity_compare.csv",
            Figure::Runtime => "runtime.csv",
        }
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `location_persistency.csv`, `set_persistency.csv` and
/// `compensation.csv` for one mode into `dir`.
pub fn write_metrics(doc: &ReportDocument, mode: Option<Mode>, dir: &Path) -> Result<()> {
    let (_, m) = doc.mode_or_default(mode)?;
    let p = m.recompute_persistency();
    std::fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("location_persistency.csv"))?;
    w.write_record(["location", "first_seen", "persistency_pct", "steps_present"])?;
    for l in &p.locations {
        w.write_record([
            l.location.to_string(),
            fmt_opt(l.first_seen),
            num(l.persistency_pct),
            l.steps_present.to_string(),
        ])?;
    }
    w.flush()?;

    let ts: Vec<usize> = m.converged_scenarios().map(|s| s.t).collect();
    let mut w = csv::Writer::from_path(dir.join("set_persistency.csv"))?;
    w.write_record(["t", "set_size", "union_size", "set_persistency_pct"])?;
    for (k, &t) in ts.iter().enumerate() {
        w.write_record([
            t.to_string(),
            p.set_sizes[k].to_string(),
            p.union_sizes[k].to_string(),
            num(p.set_persistency[k]),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("compensation.csv"))?;
    w.write_record(["t", "total_l1", "support_size"])?;
    for s in m.converged_scenarios() {
        w.write_record([s.t.to_string(), num(s.total_l1), s.support.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one long-format plot series to `path`.
pub fn write_plot_data(doc: &ReportDocument, figure: Figure, mode: Option<Mode>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    match figure {
        Figure::Trajectory => {
            let (_, m) = doc.mode_or_default(mode)?;
            w.write_record(["t", "location", "magnitude"])?;
            for s in m.converged_scenarios() {
                for mag in &s.magnitudes {
                    w.write_record([s.t.to_string(), mag.location.to_string(), num(mag.magnitude_pu)])?;
                }
            }
        }
        Figure::SetPersistency => {
            w.write_record(["t", "mode", "set_size", "union_size", "set_persistency_pct"])?;
            for (key, m) in &doc.modes {
                let p = m.recompute_persistency();
                for (k, s) in m.converged_scenarios().enumerate() {
                    w.write_record([
                        s.t.to_string(),
                        key.clone(),
                        p.set_sizes[k].to_string(),
                        p.union_sizes[k].to_string(),
                        num(p.set_persistency[k]),
                    ])?;
                }
            }
        }
        Figure::SparsityCompare => {
            let mp = doc.mode(Mode::MultiPeriod)?;
            let bl = doc.mode(Mode::BaselineSingleScenario)?;
            w.write_record(["t", "mode", "support_size", "total_l1"])?;
            for t in 1..=doc.metadata.factors.len() {
                for (key, m) in [(Mode::MultiPeriod.key(), mp), (Mode::BaselineSingleScenario.key(), bl)] {
                    if let Some(s) = m.converged_scenarios().find(|s| s.t == t) {
                        w.write_record([t.to_string(), key.to_string(), s.support.len().to_string(), num(s.total_l1)])?;
                    }
                }
            }
        }
        Figure::Runtime => {
            w.write_record(["mode", "scenario", "seconds"])?;
            for (key, m) in &doc.modes {
                for s in &m.scenarios {
                    w.write_record([key.clone(), s.t.to_string(), num(s.wall_clock_seconds)])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
