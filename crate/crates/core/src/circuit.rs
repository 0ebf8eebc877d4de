//! Rectangular-coordinate current-balance equations.
//!
//! State layout: `[vr_0, vi_0, vr_1, vi_1, …, q_pv_0, q_pv_1, …]` with buses in
//! ascending id order. Row layout: a (real, imag) current-balance pair for every
//! non-slack bus in ascending id order, one voltage-magnitude row per PV bus,
//! then the two fixed-voltage rows of the slack bus.

use num_complex::Complex64;

use crate::case::{BusId, BusKind, NetworkCase, Scenario};
use crate::error::{Error, Result};
use crate::linalg::CscMatrix;

/// |V| below which the load current model is considered undefined.
pub const COLLAPSE_MAGNITUDE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Vec<f64>);

/// Complex compensation currents, `[n_re_0, n_im_0, n_re_1, …]` per
/// compensable location.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackVector(pub Vec<f64>);

impl SlackVector {
    pub fn zeros(locations: usize) -> Self {
        SlackVector(vec![0.0; 2 * locations])
    }

    pub fn locations(&self) -> usize {
        self.0.len() / 2
    }

    pub fn get(&self, l: usize) -> Complex64 {
        Complex64::new(self.0[2 * l], self.0[2 * l + 1])
    }

    pub fn magnitude(&self, l: usize) -> f64 {
        self.0[2 * l].hypot(self.0[2 * l + 1])
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.locations()).map(|l| self.magnitude(l)).collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().into_iter().fold(0.0, f64::max)
    }

    pub fn total_l1(&self) -> f64 {
        self.magnitudes().iter().sum()
    }
}

#[derive(Clone, Debug)]
struct BusData {
    id: BusId,
    kind: BusKind,
    p_gen: f64,
    q_gen: f64,
    p_load: f64,
    q_load: f64,
    v_set: f64,
    angle_set: f64,
    /// Row pair index for non-slack buses.
    location: Option<usize>,
    /// Index among PV buses.
    pv: Option<usize>,
}

/// Residual and derivative evaluator for one scenario. Immutable after
/// construction.
#[derive(Clone, Debug)]
pub struct CircuitAssembly {
    buses: Vec<BusData>,
    /// Bus admittance rows: `(column bus, G, B)`, diagonal included.
    ybus: Vec<Vec<(usize, f64, f64)>>,
    locations: Vec<usize>,
    pv_buses: Vec<usize>,
    slack: usize,
    base_mva: f64,
    load_scale: f64,
}

pub fn assemble(scenario: &Scenario) -> Result<CircuitAssembly> {
    CircuitAssembly::new(&scenario.case)
}

impl CircuitAssembly {
    pub fn new(case: &NetworkCase) -> Result<Self> {
        let mut order: Vec<usize> = (0..case.buses.len()).collect();
        order.sort_by_key(|&k| case.buses[k].id);
        let position: std::collections::HashMap<BusId, usize> = order
            .iter()
            .enumerate()
            .map(|(p, &k)| (case.buses[k].id, p))
            .collect();

        let mut buses = Vec::with_capacity(order.len());
        let (mut n_loc, mut n_pv) = (0, 0);
        for &k in &order {
            let b = &case.buses[k];
            let gen = case.generator_at(b.id);
            let (gp, gq) = gen.map_or((0.0, 0.0), |g| (g.p_set, g.q_set));
            let location = (b.kind != BusKind::Slack).then(|| {
                n_loc += 1;
                n_loc - 1
            });
            let pv = (b.kind == BusKind::Pv).then(|| {
                n_pv += 1;
                n_pv - 1
            });
            buses.push(BusData {
                id: b.id,
                kind: b.kind,
                p_gen: gp,
                // A PV bus carries its reactive output as an unknown.
                q_gen: if b.kind == BusKind::Pq { gq } else { 0.0 },
                p_load: b.p_load,
                q_load: b.q_load,
                v_set: b.v_set,
                angle_set: b.angle_set,
                location,
                pv,
            });
        }

        let n = buses.len();
        let mut y = vec![std::collections::BTreeMap::<usize, Complex64>::new(); n];
        for (p, &k) in order.iter().enumerate() {
            let b = &case.buses[k];
            *y[p].entry(p).or_default() += Complex64::new(b.shunt_g, b.shunt_b);
        }
        for br in &case.branches {
            if !br.status {
                continue;
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::SingularAssembly(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
            let (f, t) = (position[&br.from], position[&br.to]);
            let ys = Complex64::new(br.r, br.x).inv();
            let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
            let half_b = Complex64::new(0.0, br.b_charging / 2.0);
            let ytt = ys + half_b;
            let yff = ytt / tap.norm_sqr();
            let yft = -ys / tap.conj();
            let ytf = -ys / tap;
            *y[f].entry(f).or_default() += yff;
            *y[t].entry(t).or_default() += ytt;
            *y[f].entry(t).or_default() += yft;
            *y[t].entry(f).or_default() += ytf;
        }
        let ybus = y
            .into_iter()
            .map(|row| row.into_iter().map(|(j, v)| (j, v.re, v.im)).collect())
            .collect();

        let locations = (0..n).filter(|&p| buses[p].location.is_some()).collect();
        let pv_buses = (0..n).filter(|&p| buses[p].pv.is_some()).collect();
        let slack = (0..n)
            .find(|&p| buses[p].kind == BusKind::Slack)
            .ok_or_else(|| Error::InvalidTopology("no slack bus".into()))?;
        Ok(CircuitAssembly {
            buses,
            ybus,
            locations,
            pv_buses,
            slack,
            base_mva: case.base_mva,
            load_scale: 1.0,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn pv_count(&self) -> usize {
        self.pv_buses.len()
    }

    pub fn location_count(&self) -> usize {
        self.locations.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.bus_count() + self.pv_count()
    }

    pub fn residual_dim(&self) -> usize {
        2 * self.location_count() + self.pv_count() + 2
    }

    /// Number of leading state entries that are voltage components.
    pub fn voltage_dim(&self) -> usize {
        2 * self.bus_count()
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Bus ids of the compensable locations, ascending.
    pub fn compensable(&self) -> Vec<BusId> {
        self.locations.iter().map(|&p| self.buses[p].id).collect()
    }

    pub fn location_of(&self, bus: BusId) -> Option<usize> {
        self.buses.iter().find(|b| b.id == bus).and_then(|b| b.location)
    }

    pub fn bus_ids(&self) -> Vec<BusId> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Rows of the current-balance pair of location `l`.
    pub fn location_rows(&self, l: usize) -> (usize, usize) {
        (2 * l, 2 * l + 1)
    }

    pub fn is_kcl_row(&self, row: usize) -> bool {
        row < 2 * self.location_count()
    }

    fn pv_row(&self, k: usize) -> usize {
        2 * self.location_count() + k
    }

    fn slack_rows(&self) -> (usize, usize) {
        let r = 2 * self.location_count() + self.pv_count();
        (r, r + 1)
    }

    fn q_col(&self, k: usize) -> usize {
        2 * self.bus_count() + k
    }

    /// v_real = v_set (PV and slack use their setpoint), v_imag = 0, q_gen = 0.
    pub fn flat_start(&self) -> StateVector {
        let mut x = vec![0.0; self.state_dim()];
        for (p, b) in self.buses.iter().enumerate() {
            x[2 * p] = if b.kind == BusKind::Pq { 1.0 } else { b.v_set };
        }
        let s = &self.buses[self.slack];
        x[2 * self.slack] = s.v_set * s.angle_set.cos();
        x[2 * self.slack + 1] = s.v_set * s.angle_set.sin();
        StateVector(x)
    }

    pub fn voltage(&self, x: &StateVector, bus_pos: usize) -> Complex64 {
        Complex64::new(x.0[2 * bus_pos], x.0[2 * bus_pos + 1])
    }

    pub fn location_voltage(&self, x: &StateVector, l: usize) -> Complex64 {
        self.voltage(x, self.locations[l])
    }

    /// Apparent-power equivalent |n_l|·|V_l|·base of a compensation current, MVA.
    pub fn mva_equivalent(&self, x: &StateVector, n: &SlackVector, l: usize) -> f64 {
        n.magnitude(l) * self.location_voltage(x, l).norm() * self.base_mva
    }

    /// Same network with every load multiplied by `scale`.
    pub fn with_load_scale(&self, scale: f64) -> Self {
        let mut out = self.clone();
        out.load_scale = self.load_scale * scale;
        out
    }

    /// Net injection power (P, Q) at `p` with the PV reactive output taken from `x`.
    fn injection(&self, x: &[f64], p: usize) -> (f64, f64) {
        let b = &self.buses[p];
        let s = self.load_scale;
        let q = b.q_gen - s * b.q_load + b.pv.map_or(0.0, |k| x[self.q_col(k)]);
        (b.p_gen - s * b.p_load, q)
    }

    /// g(x) + n on the current-balance rows; PV and slack rows ignore n.
    pub fn residual(&self, x: &StateVector, n: &SlackVector) -> Vec<f64> {
        assert_eq!(x.0.len(), self.state_dim());
        assert_eq!(n.0.len(), 2 * self.location_count());
        let x = &x.0;
        let mut g = vec![0.0; self.residual_dim()];
        for (l, &p) in self.locations.iter().enumerate() {
            let (mut ir, mut ii) = (0.0, 0.0);
            for &(j, gij, bij) in &self.ybus[p] {
                let (vr, vi) = (x[2 * j], x[2 * j + 1]);
                ir += gij * vr - bij * vi;
                ii += gij * vi + bij * vr;
            }
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let r2 = a * a + b * b;
            let (pp, qq) = self.injection(x, p);
            g[2 * l] = ir - (pp * a + qq * b) / r2 + n.0[2 * l];
            g[2 * l + 1] = ii - (pp * b - qq * a) / r2 + n.0[2 * l + 1];
        }
        for (k, &p) in self.pv_buses.iter().enumerate() {
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let vs = self.buses[p].v_set;
            g[self.pv_row(k)] = a * a + b * b - vs * vs;
        }
        let s = &self.buses[self.slack];
        let (r0, r1) = self.slack_rows();
        g[r0] = x[2 * self.slack] - s.v_set * s.angle_set.cos();
        g[r1] = x[2 * self.slack + 1] - s.v_set * s.angle_set.sin();
        g
    }

    /// Mismatch with no compensation.
    pub fn mismatch(&self, x: &StateVector) -> Vec<f64> {
        self.residual(x, &SlackVector::zeros(self.location_count()))
    }

    fn check_voltages(&self, x: &[f64]) -> Result<()> {
        for (p, b) in self.buses.iter().enumerate() {
            let m = x[2 * p].hypot(x[2 * p + 1]);
            if !(m >= COLLAPSE_MAGNITUDE) {
                return Err(Error::VoltageCollapsePoint {
                    bus: b.id,
                    magnitude: m,
                });
            }
        }
        Ok(())
    }

    /// Triplets of ∂residual/∂x. The pattern depends only on the case.
    pub fn jacobian_triplets(&self, x: &StateVector) -> Result<Vec<(usize, usize, f64)>> {
        let x = &x.0;
        self.check_voltages(x)?;
        let mut t = Vec::new();
        for (l, &p) in self.locations.iter().enumerate() {
            let (rr, ri) = (2 * l, 2 * l + 1);
            for &(j, gij, bij) in &self.ybus[p] {
                t.push((rr, 2 * j, gij));
                t.push((rr, 2 * j + 1, -bij));
                t.push((ri, 2 * j, bij));
                t.push((ri, 2 * j + 1, gij));
            }
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let r2 = a * a + b * b;
            let r4 = r2 * r2;
            let (pp, qq) = self.injection(x, p);
            let u = a / r2;
            let w = b / r2;
            let u_a = (b * b - a * a) / r4;
            let u_b = -2.0 * a * b / r4;
            let w_a = u_b;
            let w_b = -u_a;
            t.push((rr, 2 * p, -(pp * u_a + qq * w_a)));
            t.push((rr, 2 * p + 1, -(pp * u_b + qq * w_b)));
            t.push((ri, 2 * p, -(pp * w_a - qq * u_a)));
            t.push((ri, 2 * p + 1, -(pp * w_b - qq * u_b)));
            if let Some(k) = self.buses[p].pv {
                t.push((rr, self.q_col(k), -w));
                t.push((ri, self.q_col(k), u));
            }
        }
        for (k, &p) in self.pv_buses.iter().enumerate() {
            t.push((self.pv_row(k), 2 * p, 2.0 * x[2 * p]));
            t.push((self.pv_row(k), 2 * p + 1, 2.0 * x[2 * p + 1]));
        }
        let (r0, r1) = self.slack_rows();
        t.push((r0, 2 * self.slack, 1.0));
        t.push((r1, 2 * self.slack + 1, 1.0));
        Ok(t)
    }

    pub fn jacobian(&self, x: &StateVector) -> Result<CscMatrix> {
        let t = self.jacobian_triplets(x)?;
        Ok(CscMatrix::from_triplets(self.residual_dim(), self.state_dim(), &t))
    }

    /// Triplets (both triangles) of Σ_k w_k ∇²residual_k.
    pub fn hessian_contraction(&self, x: &StateVector, w: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        assert_eq!(w.len(), self.residual_dim());
        let x = &x.0;
        self.check_voltages(x)?;
        let mut t = Vec::new();
        for (l, &p) in self.locations.iter().enumerate() {
            let (lr, li) = (w[2 * l], w[2 * l + 1]);
            let (a, b) = (x[2 * p], x[2 * p + 1]);
            let r2 = a * a + b * b;
            let r4 = r2 * r2;
            let r6 = r4 * r2;
            let (pp, qq) = self.injection(x, p);
            let u_aa = (2.0 * a * a * a - 6.0 * a * b * b) / r6;
            let u_ab = (6.0 * a * a * b - 2.0 * b * b * b) / r6;
            let u_bb = -u_aa;
            let (w_aa, w_ab, w_bb) = (u_ab, -u_aa, -u_ab);
            // residual = network − injection, so the curvature carries a minus sign.
            let h_aa = -(lr * (pp * u_aa + qq * w_aa) + li * (pp * w_aa - qq * u_aa));
            let h_ab = -(lr * (pp * u_ab + qq * w_ab) + li * (pp * w_ab - qq * u_ab));
            let h_bb = -(lr * (pp * u_bb + qq * w_bb) + li * (pp * w_bb - qq * u_bb));
            let (ca, cb) = (2 * p, 2 * p + 1);
            t.push((ca, ca, h_aa));
            t.push((ca, cb, h_ab));
            t.push((cb, ca, h_ab));
            t.push((cb, cb, h_bb));
            if let Some(k) = self.buses[p].pv {
                let u_a = (b * b - a * a) / r4;
                let u_b = -2.0 * a * b / r4;
                let (w_a, w_b) = (u_b, -u_a);
                let h_aq = -(lr * w_a - li * u_a);
                let h_bq = -(lr * w_b - li * u_b);
                let cq = self.q_col(k);
                t.push((ca, cq, h_aq));
                t.push((cq, ca, h_aq));
                t.push((cb, cq, h_bq));
                t.push((cq, cb, h_bq));
            }
        }
        for (k, &p) in self.pv_buses.iter().enumerate() {
            let lam = w[self.pv_row(k)];
            t.push((2 * p, 2 * p, 2.0 * lam));
            t.push((2 * p + 1, 2 * p + 1, 2.0 * lam));
        }
        Ok(t)
    }

    /// Gradient Jᵀg of ½‖g(x)‖² with no compensation.
    pub fn least_squares_gradient(&self, x: &StateVector) -> Result<Vec<f64>> {
        let g = self.mismatch(x);
        Ok(self.jacobian(x)?.tr_mul_vec(&g))
    }

    /// Compensation implied by a state: n = −g on the current-balance rows.
    pub fn implied_slack(&self, x: &StateVector) -> SlackVector {
        let g = self.mismatch(x);
        SlackVector(g[..2 * self.location_count()].iter().map(|v| -v).collect())
    }
}
