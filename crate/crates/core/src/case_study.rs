//! The four-DGU ring used as the reference scenario.
//!
//! Electrical constants, bounds and controller gains are the reference
//! case-study values. The source voltage, the initial condition and the
//! integration settings are not part of that data; the values used here are
//! defaults and can be overridden in a scenario file.

use crate::controller::{ControllerSpec, Mode, NodeGains};
use crate::grid::{Edge, GridParameters, NodeParams, Topology};
use crate::sim::{default_initial_state, LoadEvent, Scenario, SwitchPolicy};

pub const SOURCE_VOLTAGE: f64 = 380.0;
pub const NOMINAL_VOLTAGE: f64 = 230.0;
pub const V_MIN: f64 = 229.0;
pub const V_MAX: f64 = 231.0;
pub const LOAD_UNCERTAINTY: f64 = 0.05;
pub const DURATION: f64 = 0.5;
pub const DT: f64 = 1e-5;
pub const LOAD_STEP_TIME: f64 = 0.25;
pub const LOAD_STEP_FACTOR: f64 = 1.05;
/// Initial currents sit this fraction of `Ĩ_l` below the safe band.
pub const INITIAL_CURRENT_FRACTION: f64 = 0.95;

const INDUCTANCE_MH: [f64; 4] = [1.8, 2.0, 3.0, 2.2];
const CAPACITANCE_MF: [f64; 4] = [2.2, 1.9, 2.5, 1.7];
const LOAD_RESISTANCE_OHM: [f64; 4] = [16.7, 50.0, 16.7, 20.0];
const I_MIN: [f64; 4] = [13.0, 4.4, 13.0, 11.0];
const I_MAX: [f64; 4] = [14.5, 4.9, 14.5, 12.1];
const LINE_RESISTANCE_MOHM: [f64; 4] = [70.0, 50.0, 80.0, 60.0];
const ETA_L: [f64; 4] = [0.5, 0.4, 0.5, 0.3];
const ETA_H: [f64; 4] = [0.4, 0.3, 0.5, 0.4];
const SLACK_PENALTY: f64 = 1e23;

/// Ring 1–2–3–4–1 (zero-based here); line k joins node k and node k+1.
pub fn topology() -> Topology {
    let edges = (0..4)
        .map(|k| Edge {
            head: k,
            tail: (k + 1) % 4,
        })
        .collect();
    Topology::new(4, edges).expect("ring topology is valid")
}

pub fn parameters() -> GridParameters {
    let nodes = (0..4)
        .map(|i| {
            let load = 1.0 / LOAD_RESISTANCE_OHM[i];
            NodeParams {
                inductance: INDUCTANCE_MH[i] / 1000.0,
                capacitance: CAPACITANCE_MF[i] / 1000.0,
                load,
                load_min: (1.0 - LOAD_UNCERTAINTY) * load,
                load_max: (1.0 + LOAD_UNCERTAINTY) * load,
                source_voltage: SOURCE_VOLTAGE,
                v_min: V_MIN,
                v_max: V_MAX,
                i_min: I_MIN[i],
                i_max: I_MAX[i],
            }
        })
        .collect();
    GridParameters {
        nodes,
        line_resistance: LINE_RESISTANCE_MOHM.iter().map(|r| r / 1000.0).collect(),
    }
}

pub fn gains() -> Vec<NodeGains> {
    (0..4)
        .map(|i| NodeGains {
            eta_l: ETA_L[i],
            eta_h: ETA_H[i],
            p_l: SLACK_PENALTY,
            p_h: SLACK_PENALTY,
        })
        .collect()
}

pub fn scenario() -> Scenario {
    let params = parameters();
    Scenario {
        duration: DURATION,
        dt: DT,
        initial: default_initial_state(&params, INITIAL_CURRENT_FRACTION),
        controller: ControllerSpec {
            mode: Mode::Joint,
            gains: gains(),
        },
        events: vec![LoadEvent {
            time: LOAD_STEP_TIME,
            factor: LOAD_STEP_FACTOR,
        }],
        switch_policy: SwitchPolicy::RelaxedUntilFeasible,
    }
}
