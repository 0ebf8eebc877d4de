//! Seeded generator of tiny collapsed networks for oracle comparisons.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::{Branch, Bus, BusId, BusKind, Generator, NetworkCase};
use crate::circuit::CircuitAssembly;
use crate::error::Result;
use crate::oracle::restricted_feasibility_check;
use crate::solver::{solve_power_flow, SolverConfig};

const MAX_DRAWS: usize = 200;
const BISECTIONS: usize = 30;

/// `count` collapsed networks of 3 to 6 buses. Each has a random radial
/// backbone (plus an occasional mesh branch), light random loads, and one or
/// two "pocket" buses whose load is pushed 5–30% beyond the largest value for
/// which the power flow still solves.
pub fn collapsed_toy_suite(seed: u64, count: usize, config: &SolverConfig) -> Result<Vec<NetworkCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count && draws < MAX_DRAWS * count {
        draws += 1;
        if let Some(case) = draw_collapsed(&mut rng, out.len(), config)? {
            out.push(case);
        }
    }
    Ok(out)
}

fn draw_collapsed(rng: &mut ChaCha8Rng, index: usize, config: &SolverConfig) -> Result<Option<NetworkCase>> {
    let nb: u32 = rng.gen_range(3..=6);
    let mut buses = vec![plain_bus(1, BusKind::Slack, 0.0, 0.0)];
    let mut generators = vec![Generator {
        bus: BusId(1),
        p_set: 0.0,
        q_set: 0.0,
        v_set: 1.0,
        status: true,
    }];
    let pv = if nb >= 4 && rng.gen_bool(0.3) { Some(rng.gen_range(2..=nb)) } else { None };
    for id in 2..=nb {
        if Some(id) == pv {
            buses.push(plain_bus(id, BusKind::Pv, 0.0, 0.0));
            generators.push(Generator {
                bus: BusId(id),
                p_set: rng.gen_range(0.1..0.4),
                q_set: 0.0,
                v_set: 1.0,
                status: true,
            });
        } else {
            let p = rng.gen_range(0.05..0.3);
            let q = p * rng.gen_range(0.1..0.4);
            buses.push(plain_bus(id, BusKind::Pq, p, q));
        }
    }

    let mut edges = BTreeSet::new();
    for id in 2..=nb {
        edges.insert((rng.gen_range(1..id), id));
    }
    if nb >= 4 && rng.gen_bool(0.5) {
        let a = rng.gen_range(1..nb);
        let b = rng.gen_range(a + 1..=nb);
        edges.insert((a, b));
    }
    let branches: Vec<Branch> = edges
        .into_iter()
        .map(|(a, b)| Branch {
            from: BusId(a),
            to: BusId(b),
            r: rng.gen_range(0.005..0.03),
            x: rng.gen_range(0.05..0.25),
            b_charging: 0.0,
            tap_ratio: 1.0,
            phase_shift: 0.0,
            status: true,
        })
        .collect();

    let mut pq: Vec<u32> = (2..=nb).filter(|&id| Some(id) != pv).collect();
    pq.shuffle(rng);
    let pocket_size = if pq.len() >= 3 && rng.gen_bool(0.3) { 2 } else { 1 };
    let pocket: Vec<u32> = pq.into_iter().take(pocket_size).collect();
    let overshoot = rng.gen_range(1.05..1.3);

    let name = format!("toy-{index}");
    let with_pocket = |m: f64| -> Result<NetworkCase> {
        let mut b = buses.clone();
        for bus in &mut b {
            if pocket.contains(&bus.id.0) {
                bus.p_load *= m;
                bus.q_load *= m;
            }
        }
        NetworkCase::new(&name, 100.0, b, branches.clone(), generators.clone())
    };
    let solves = |m: f64| -> Result<bool> {
        let asm = CircuitAssembly::new(&with_pocket(m)?)?;
        Ok(solve_power_flow(&asm, config, None).converged())
    };

    // Bracket the largest pocket multiplier with a solvable power flow.
    if !solves(1.0)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while solves(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Ok(None);
        }
    }
    for _ in 0..BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if solves(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let case = with_pocket(lo * overshoot)?;
    let asm = CircuitAssembly::new(&case)?;
    let (feasible, _) = restricted_feasibility_check(&asm, &BTreeSet::new(), config, None)?;
    Ok((!feasible).then_some(case))
}

fn plain_bus(id: u32, kind: BusKind, p: f64, q: f64) -> Bus {
    Bus {
        id: BusId(id),
        kind,
        p_load: p,
        q_load: q,
        shunt_g: 0.0,
        shunt_b: 0.0,
        v_set: 1.0,
        angle_set: 0.0,
    }
}
