#![allow(dead_code)]

use std::path::PathBuf;

use blackout_lens::case::NetworkCase;
use blackout_lens::circuit::{CircuitAssembly, StateVector};
use blackout_lens::matpower::parse_matpower_case;
use rand::Rng;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

pub fn case_text(name: &str) -> String {
    std::fs::read_to_string(case_path(name)).unwrap()
}

pub fn load(name: &str) -> NetworkCase {
    parse_matpower_case(&case_text(name)).unwrap()
}

pub fn case30() -> NetworkCase {
    load("case30.m")
}

pub fn case30_factors() -> Vec<f64> {
    (0..10).map(|k| (38 + k) as f64 / 10.0).collect()
}

/// Voltages near nominal with random angles and magnitudes, random q_gen.
pub fn random_state(asm: &CircuitAssembly, rng: &mut impl Rng) -> StateVector {
    let mut x = Vec::with_capacity(asm.state_dim());
    for _ in 0..asm.bus_count() {
        let m: f64 = rng.gen_range(0.8..1.2);
        let a: f64 = rng.gen_range(-0.5..0.5);
        x.push(m * a.cos());
        x.push(m * a.sin());
    }
    for _ in 0..asm.pv_count() {
        x.push(rng.gen_range(-0.5..0.5));
    }
    StateVector(x)
}
