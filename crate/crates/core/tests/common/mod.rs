//! Shared generators and brute-force oracles for the integration suites.
#![allow(dead_code)]

use dcgrid::controller::{ControllerSpec, Mode, NodeGains, NodeObservation};
use dcgrid::grid::{Edge, GridModel, GridParameters, GridState, NodeParams, Topology};
use dcgrid::sim::{Scenario, SwitchPolicy};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random spanning tree plus a few chords, with random edge orientations.
pub fn random_topology<R: Rng>(rng: &mut R, n: usize) -> Topology {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        edges.push((order[k], parent));
    }
    let extra = if n > 2 { rng.gen_range(0..=n) } else { 0 };
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push((a, b));
        }
    }
    let edges = edges
        .into_iter()
        .map(|(a, b)| {
            if rng.gen_bool(0.5) {
                Edge { head: a, tail: b }
            } else {
                Edge { head: b, tail: a }
            }
        })
        .collect();
    Topology::new(n, edges).expect("spanning tree keeps the graph connected")
}

/// Parameters of one DGU in the range of the four-DGU case study. The joint
/// safe current band is guaranteed nonempty.
pub fn random_node<R: Rng>(rng: &mut R) -> NodeParams {
    loop {
        let load = 1.0 / rng.gen_range(15.0..50.0);
        let spread = rng.gen_range(0.01..0.05);
        let v_nom = rng.gen_range(200.0..250.0);
        let half_band = rng.gen_range(1.0..5.0);
        let i_nom = load * v_nom;
        let p = NodeParams {
            inductance: rng.gen_range(1.5e-3..3.0e-3),
            capacitance: rng.gen_range(1.5e-3..2.5e-3),
            load,
            load_min: (1.0 - spread) * load,
            load_max: (1.0 + spread) * load,
            source_voltage: rng.gen_range(350.0..420.0),
            v_min: v_nom - half_band,
            v_max: v_nom + half_band,
            i_min: i_nom * (1.0 - rng.gen_range(0.02..0.10)),
            i_max: i_nom * (1.0 + rng.gen_range(0.02..0.10)),
        };
        let lower = (p.v_min * p.load_min).max(p.i_min);
        let upper = (p.v_max * p.load_max).min(p.i_max);
        if lower < upper {
            return p;
        }
    }
}

pub fn random_gains<R: Rng>(rng: &mut R) -> NodeGains {
    NodeGains {
        eta_l: rng.gen_range(0.2..0.6),
        eta_h: rng.gen_range(0.2..0.6),
        p_l: 1e23,
        p_h: 1e23,
    }
}

pub fn random_grid<R: Rng>(rng: &mut R, n: usize) -> (Topology, GridParameters) {
    let topology = random_topology(rng, n);
    let params = GridParameters {
        nodes: (0..n).map(|_| random_node(rng)).collect(),
        line_resistance: (0..topology.edge_count())
            .map(|_| rng.gen_range(0.05..0.1))
            .collect(),
    };
    (topology, params)
}

pub fn joint_band(p: &NodeParams) -> (f64, f64) {
    ((p.v_min * p.load_min).max(p.i_min), (p.v_max * p.load_max).min(p.i_max))
}

/// A state strictly inside every node's joint safe set (inner 80 %).
pub fn random_inside_state<R: Rng>(rng: &mut R, params: &GridParameters) -> GridState {
    let pick = |rng: &mut R, lo: f64, hi: f64| {
        let w = hi - lo;
        rng.gen_range(lo + 0.1 * w..hi - 0.1 * w)
    };
    let mut current = Vec::new();
    let mut voltage = Vec::new();
    for p in &params.nodes {
        let (lo, hi) = joint_band(p);
        current.push(pick(rng, lo, hi));
        voltage.push(pick(rng, p.v_min, p.v_max));
    }
    GridState { current, voltage }
}

pub fn strict_scenario(initial: GridState, gains: Vec<NodeGains>, duration: f64) -> Scenario {
    Scenario {
        duration,
        dt: 1e-5,
        initial,
        controller: ControllerSpec {
            mode: Mode::Joint,
            gains,
        },
        events: Vec::new(),
        switch_policy: SwitchPolicy::AlwaysStrict,
    }
}

/// Current references of the barrier constraints, evaluated from first
/// principles rather than through the controller module.
pub fn references(p: &NodeParams, mode: Mode) -> (f64, f64) {
    match mode {
        Mode::KnownLoad => (p.load * p.v_min, p.load * p.v_max),
        Mode::LoadInterval => (p.load_min * p.v_min, p.load_max * p.v_max),
        Mode::Joint | Mode::Relaxed => joint_band(p),
    }
}

/// Raw residuals of the two barrier inequalities at duty ratio `a`.
pub fn residuals(a: f64, obs: NodeObservation, p: &NodeParams, g: &NodeGains, mode: Mode) -> (f64, f64) {
    let (ref_l, ref_h) = references(p, mode);
    (
        a * p.source_voltage - obs.voltage + g.eta_l * (obs.current - ref_l),
        -a * p.source_voltage + obs.voltage - g.eta_h * (obs.current - ref_h),
    )
}

pub struct GridOptimum {
    pub duty: f64,
    pub objective: f64,
}

/// Minimizes `a²` over the grid `{k·step} ∩ [0, 1]` subject to both
/// inequalities. `None` when no grid point is feasible.
pub fn grid_strict(obs: NodeObservation, p: &NodeParams, g: &NodeGains, mode: Mode, step: f64) -> Option<GridOptimum> {
    let points = (1.0 / step).round() as usize;
    (0..=points).map(|k| k as f64 * step).find_map(|a| {
        let (gl, gh) = residuals(a, obs, p, g, mode);
        // Ascending scan: the first feasible point has the smallest a².
        (gl >= 0.0 && gh >= 0.0).then_some(GridOptimum {
            duty: a,
            objective: a * a,
        })
    })
}

/// Slack-relaxed objective with the analytically optimal slacks.
pub fn relaxed_value(a: f64, obs: NodeObservation, p: &NodeParams, g: &NodeGains) -> f64 {
    let (gl, gh) = residuals(a, obs, p, g, Mode::Relaxed);
    let el = (-gl).max(0.0);
    let eh = (-gh).max(0.0);
    a * a + g.p_l * el * el + g.p_h * eh * eh
}

pub fn grid_relaxed(obs: NodeObservation, p: &NodeParams, g: &NodeGains, step: f64) -> GridOptimum {
    let points = (1.0 / step).round() as usize;
    let mut best = GridOptimum {
        duty: 0.0,
        objective: relaxed_value(0.0, obs, p, g),
    };
    for k in 1..=points {
        let a = k as f64 * step;
        let v = relaxed_value(a, obs, p, g);
        if v < best.objective {
            best = GridOptimum { duty: a, objective: v };
        }
    }
    best
}

/// Observation and tuning for one randomized QP instance. The state is drawn
/// around the node's operating point, wide enough that both feasible and
/// infeasible strict problems occur.
pub fn random_qp_instance<R: Rng>(rng: &mut R) -> (NodeObservation, NodeParams, NodeGains) {
    let p = random_node(rng);
    let mid_v = 0.5 * (p.v_min + p.v_max);
    let (lo, hi) = joint_band(&p);
    let mid_i = 0.5 * (lo + hi);
    let obs = if rng.gen_bool(0.1) {
        // far from the operating point: strict problem often infeasible
        NodeObservation {
            current: rng.gen_range(-3.0 * mid_i..3.0 * mid_i),
            voltage: rng.gen_range(0.0..1.2 * p.source_voltage),
        }
    } else {
        NodeObservation {
            current: mid_i + rng.gen_range(-0.5..0.5) * mid_i,
            voltage: mid_v + rng.gen_range(-20.0..20.0),
        }
    };
    let exponent = rng.gen_range(-2.0..23.0);
    let gains = NodeGains {
        eta_l: rng.gen_range(0.05..2.0),
        eta_h: rng.gen_range(0.05..2.0),
        p_l: 10f64.powf(exponent),
        p_h: 10f64.powf(exponent + rng.gen_range(-2.0..2.0)),
    };
    (obs, p, gains)
}

/// A single node whose current is effectively frozen at zero: with a huge
/// inductance the capacitor sees `V̇ = −V`.
pub fn scalar_decay() -> GridModel {
    let p = NodeParams {
        inductance: 1e300,
        capacitance: 1.0,
        load: 1.0,
        load_min: 1.0,
        load_max: 1.0,
        source_voltage: 10.0,
        v_min: 0.5,
        v_max: 2.0,
        i_min: 0.0,
        i_max: 1.0,
    };
    GridModel::new(
        Topology::new(1, Vec::new()).unwrap(),
        GridParameters {
            nodes: vec![p],
            line_resistance: Vec::new(),
        },
    )
    .unwrap()
}
