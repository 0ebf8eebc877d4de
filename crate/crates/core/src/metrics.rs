//! Persistency metrics over a stress-ordered list of vulnerability sets.
//! Time indices are 1-based.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::case::BusId;
use crate::sparse::VulnerabilitySet;

/// First step k ≤ T−1 at which `i` is vulnerable.
pub fn first_seen(sets: &[VulnerabilitySet], i: BusId) -> Option<usize> {
    let t_max = sets.len();
    (1..t_max).find(|&t| sets[t - 1].contains(i))
}

/// Share (percent) of the steps from the first appearance k onwards in which
/// `i` stays vulnerable. Zero when `i` never appears before the last step or
/// is never vulnerable in two consecutive steps.
pub fn location_persistency(sets: &[VulnerabilitySet], i: BusId) -> f64 {
    let t_max = sets.len();
    let Some(k) = first_seen(sets, i) else {
        return 0.0;
    };
    let consecutive = sets.windows(2).any(|w| w[0].contains(i) && w[1].contains(i));
    if !consecutive {
        return 0.0;
    }
    let present = (k..=t_max).filter(|&t| sets[t - 1].contains(i)).count();
    100.0 * present as f64 / (t_max - k + 1) as f64
}

/// 100·|S_t| / |S_1 ∪ … ∪ S_t|, or 100 when the union is empty.
pub fn set_persistency(sets: &[VulnerabilitySet], t: usize) -> f64 {
    assert!(t >= 1 && t <= sets.len(), "t out of range");
    let union = union_size(sets, t);
    if union == 0 {
        return 100.0;
    }
    100.0 * sets[t - 1].len() as f64 / union as f64
}

fn union_size(sets: &[VulnerabilitySet], t: usize) -> usize {
    sets[..t]
        .iter()
        .flat_map(|s| s.locations.iter().copied())
        .collect::<BTreeSet<_>>()
        .len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationPersistency {
    pub location: BusId,
    pub first_seen: Option<usize>,
    pub persistency_pct: f64,
    pub steps_present: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistencyReport {
    /// Every location that appears in some set, ascending.
    pub locations: Vec<LocationPersistency>,
    pub set_persistency: Vec<f64>,
    pub set_sizes: Vec<usize>,
    pub union_sizes: Vec<usize>,
    pub total_compensation: Vec<f64>,
}

impl PersistencyReport {
    /// `totals[t-1]` is Σ|n_i| of scenario t.
    pub fn from_sets(sets: &[VulnerabilitySet], totals: &[f64]) -> Self {
        let all: BTreeSet<BusId> = sets.iter().flat_map(|s| s.locations.iter().copied()).collect();
        let locations = all
            .into_iter()
            .map(|i| LocationPersistency {
                location: i,
                first_seen: first_seen(sets, i),
                persistency_pct: location_persistency(sets, i),
                steps_present: sets.iter().filter(|s| s.contains(i)).count(),
            })
            .collect();
        let t_max = sets.len();
        PersistencyReport {
            locations,
            set_persistency: (1..=t_max).map(|t| set_persistency(sets, t)).collect(),
            set_sizes: sets.iter().map(|s| s.len()).collect(),
            union_sizes: (1..=t_max).map(|t| union_size(sets, t)).collect(),
            total_compensation: totals.to_vec(),
        }
    }

    pub fn location(&self, i: BusId) -> Option<&LocationPersistency> {
        self.locations.iter().find(|l| l.location == i)
    }

    pub fn as_map(&self) -> BTreeMap<BusId, f64> {
        self.locations
            .iter()
            .map(|l| (l.location, l.persistency_pct))
            .collect()
    }
}
