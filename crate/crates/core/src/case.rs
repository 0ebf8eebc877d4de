//! Network data model and stress-ordered scenario generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// External bus number as it appears in the case file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// Bus data in per-unit on the case base. Angles are radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub v_set: f64,
    pub angle_set: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub tap_ratio: f64,
    pub phase_shift: f64,
    pub status: bool,
}

/// Generator setpoints. `q_set` is only used when the generator sits on a PQ bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub p_set: f64,
    pub q_set: f64,
    pub v_set: f64,
    pub status: bool,
}

/// Validated, immutable network. Out-of-service elements are gone and
/// generators are merged to at most one per bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

const SETPOINT_MERGE_TOL: f64 = 1e-6;

impl NetworkCase {
    /// Validates and normalizes raw data.
    ///
    /// Drops out-of-service branches and generators, merges generators that
    /// share a bus, demotes PV buses without a generator to PQ and copies
    /// generator voltage setpoints onto their buses.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "base MVA must be positive, got {base_mva}"
            )));
        }
        let mut buses = buses;
        let mut index = HashMap::with_capacity(buses.len());
        for (k, bus) in buses.iter().enumerate() {
            if index.insert(bus.id, k).is_some() {
                return Err(Error::InvalidTopology(format!("duplicate bus id {}", bus.id)));
            }
            let finite = [bus.p_load, bus.q_load, bus.shunt_g, bus.shunt_b, bus.angle_set]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!(
                    "non-finite data on bus {}",
                    bus.id
                )));
            }
        }

        let branches: Vec<Branch> = branches.into_iter().filter(|b| b.status).collect();
        for br in &branches {
            for end in [br.from, br.to] {
                if !index.contains_key(&end) {
                    return Err(Error::InvalidTopology(format!(
                        "branch {}-{} refers to unknown bus {end}",
                        br.from, br.to
                    )));
                }
            }
            if !(br.tap_ratio.is_finite() && br.tap_ratio > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "branch {}-{} has non-positive tap ratio",
                    br.from, br.to
                )));
            }
        }

        let mut merged: BTreeMap<BusId, Generator> = BTreeMap::new();
        for gen in generators.into_iter().filter(|g| g.status) {
            if !index.contains_key(&gen.bus) {
                return Err(Error::InvalidTopology(format!(
                    "generator refers to unknown bus {}",
                    gen.bus
                )));
            }
            if !(gen.v_set.is_finite() && gen.v_set > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "generator at bus {} has non-positive voltage setpoint",
                    gen.bus
                )));
            }
            match merged.get_mut(&gen.bus) {
                Some(existing) => {
                    if (existing.v_set - gen.v_set).abs() > SETPOINT_MERGE_TOL {
                        return Err(Error::InvalidTopology(format!(
                            "generators at bus {} disagree on voltage setpoint",
                            gen.bus
                        )));
                    }
                    existing.p_set += gen.p_set;
                    existing.q_set += gen.q_set;
                }
                None => {
                    merged.insert(gen.bus, gen);
                }
            }
        }

        for bus in &mut buses {
            match merged.get(&bus.id) {
                Some(gen) if bus.kind != BusKind::Pq => bus.v_set = gen.v_set,
                None if bus.kind == BusKind::Pv => bus.kind = BusKind::Pq,
                _ => {}
            }
            if bus.kind != BusKind::Pq && !(bus.v_set.is_finite() && bus.v_set > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bus {} needs a positive voltage setpoint",
                    bus.id
                )));
            }
        }

        let slack_count = buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack_count != 1 {
            return Err(Error::InvalidTopology(format!(
                "expected exactly one slack bus, found {slack_count}"
            )));
        }

        let case = NetworkCase {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators: merged.into_values().collect(),
        };
        case.check_connected()?;
        Ok(case)
    }

    fn check_connected(&self) -> Result<()> {
        let index = self.bus_index();
        let mut adjacency = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            let (f, t) = (index[&br.from], index[&br.to]);
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([self.slack_position()]);
        seen[queue[0]] = true;
        while let Some(k) = queue.pop_front() {
            for &nb in &adjacency[k] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidTopology(format!(
                "bus {} is islanded from the slack bus",
                self.buses[k].id
            )));
        }
        Ok(())
    }

    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect()
    }

    pub fn slack_position(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn slack_bus(&self) -> &Bus {
        &self.buses[self.slack_position()]
    }

    pub fn generator_at(&self, bus: BusId) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    pub fn count_kind(&self, kind: BusKind) -> usize {
        self.buses.iter().filter(|b| b.kind == kind).count()
    }
}

/// How a load factor is applied to a case.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadScaling {
    /// Extra per-bus multipliers applied before the uniform factor. Buses not
    /// listed keep 1.0.
    pub bus_factors: BTreeMap<BusId, f64>,
    /// Scale generator active power by the same factor as the loads.
    pub scale_generation: bool,
}

impl LoadScaling {
    pub fn uniform() -> Self {
        Self::default()
    }

    /// Reads a `bus_id,factor` CSV. A header row is optional.
    pub fn read_bus_factors(text: &str) -> Result<BTreeMap<BusId, f64>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut out = BTreeMap::new();
        for (k, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "scaling row {} needs bus_id,factor",
                    k + 1
                )));
            }
            let id = record[0].parse::<u32>();
            let factor = record[1].parse::<f64>();
            match (id, factor) {
                (Ok(id), Ok(f)) if f.is_finite() && f >= 0.0 => {
                    out.insert(BusId(id), f);
                }
                _ if k == 0 => continue,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "scaling row {} is not a bus_id,factor pair",
                        k + 1
                    )))
                }
            }
        }
        Ok(out)
    }
}

/// Multiplies every bus load by `load_factor`.
pub fn scale_loads(case: &NetworkCase, load_factor: f64) -> Result<NetworkCase> {
    scale_loads_with(case, load_factor, &LoadScaling::uniform())
}

pub fn scale_loads_with(
    case: &NetworkCase,
    load_factor: f64,
    scaling: &LoadScaling,
) -> Result<NetworkCase> {
    if !(load_factor.is_finite() && load_factor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "load factor must be positive, got {load_factor}"
        )));
    }
    let mut out = case.clone();
    for bus in &mut out.buses {
        let f = load_factor * scaling.bus_factors.get(&bus.id).copied().unwrap_or(1.0);
        bus.p_load *= f;
        bus.q_load *= f;
    }
    if scaling.scale_generation {
        for gen in &mut out.generators {
            gen.p_set *= load_factor;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// 1-based position in the sequence.
    pub t: usize,
    pub load_factor: f64,
    pub case: NetworkCase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSequence {
    scenarios: Vec<Scenario>,
}

impl ScenarioSequence {
    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn factors(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.load_factor).collect()
    }
}

pub fn build_scenario_sequence(case: &NetworkCase, factors: &[f64]) -> Result<ScenarioSequence> {
    build_scenario_sequence_with(case, factors, &LoadScaling::uniform())
}

pub fn build_scenario_sequence_with(
    case: &NetworkCase,
    factors: &[f64],
    scaling: &LoadScaling,
) -> Result<ScenarioSequence> {
    if factors.is_empty() || factors.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedFactors);
    }
    let scenarios = factors
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            Ok(Scenario {
                t: k + 1,
                load_factor: f,
                case: scale_loads_with(case, f, scaling)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSequence { scenarios })
}

/// Buses at which a compensation slack may appear: every non-slack bus, in
/// ascending id order.
pub fn compensable_buses(case: &NetworkCase) -> Vec<BusId> {
    let set: BTreeSet<BusId> = case
        .buses
        .iter()
        .filter(|b| b.kind != BusKind::Slack)
        .map(|b| b.id)
        .collect();
    set.into_iter().collect()
}
