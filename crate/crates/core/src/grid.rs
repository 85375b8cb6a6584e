//! Averaged network model of a DC microgrid.
//!
//! Each node is a distributed generation unit (DGU): a voltage source feeding a
//! buck converter, an LC filter and a local resistive load. Nodes are coupled by
//! purely resistive lines. With `B` the signed node/line incidence matrix the
//! averaged dynamics are
//!
//! ```text
//! L dI/dt = Vs∘u − V
//! C dV/dt = I − G V − B R⁻¹ Bᵀ V
//! ```
//!
//! `L`, `C` and `G` are diagonal and stored as per-node scalars.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("edge {edge}: node index {node} out of range for {n} nodes")]
    NodeOutOfRange { edge: usize, node: usize, n: usize },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("topology is not connected: node {node} is unreachable from node 0")]
    Disconnected { node: usize },
    #[error("topology must contain at least one node")]
    Empty,
    #[error("dimension mismatch: expected {expected} entries for {what}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// One line of the network. The head end carries `+1` in the incidence
/// matrix and the tail end `−1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub tail: usize,
}

/// Connected, loop-free oriented graph over nodes `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<Edge>,
}

impl Topology {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::Empty);
        }
        for (k, e) in edges.iter().enumerate() {
            for node in [e.head, e.tail] {
                if node >= n {
                    return Err(GridError::NodeOutOfRange { edge: k, node, n });
                }
            }
            if e.head == e.tail {
                return Err(GridError::SelfLoop {
                    edge: k,
                    node: e.head,
                });
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            adjacency[e.head].push(e.tail);
            adjacency[e.tail].push(e.head);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(GridError::Disconnected { node });
        }

        Ok(Self { n, edges })
    }

    /// Ring `0 → 1 → … → n−1 → 0`.
    pub fn ring(n: usize) -> Result<Self, GridError> {
        let edges = match n {
            0 | 1 => Vec::new(),
            2 => vec![Edge { head: 0, tail: 1 }],
            _ => (0..n)
                .map(|i| Edge {
                    head: i,
                    tail: (i + 1) % n,
                })
                .collect(),
        };
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        let m = self.edges.len();
        let mut entries = vec![0i8; self.n * m];
        for (k, e) in self.edges.iter().enumerate() {
            entries[k * self.n + e.head] = 1;
            entries[k * self.n + e.tail] = -1;
        }
        IncidenceMatrix {
            rows: self.n,
            cols: m,
            entries,
        }
    }
}

/// Signed `n × m` incidence matrix, stored column-major as small integers so
/// that structural identities can be checked exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<i8>,
}

impl IncidenceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, node: usize, edge: usize) -> i8 {
        self.entries[edge * self.rows + node]
    }

    pub fn column(&self, edge: usize) -> &[i8] {
        &self.entries[edge * self.rows..(edge + 1) * self.rows]
    }

    /// `Bᵀ 1`, evaluated in integer arithmetic.
    pub fn transpose_times_ones(&self) -> Vec<i64> {
        (0..self.cols)
            .map(|k| self.column(k).iter().map(|&b| b as i64).sum())
            .collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, k| self.get(i, k) as f64)
    }
}

/// Electrical constants of one DGU together with its safety bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeParams {
    /// Filter inductance (H).
    pub inductance: f64,
    /// Shunt capacitance (F).
    pub capacitance: f64,
    /// Load conductance seen by the plant (S).
    pub load: f64,
    /// Known lower bound on the load conductance (S).
    pub load_min: f64,
    /// Known upper bound on the load conductance (S).
    pub load_max: f64,
    /// Source voltage behind the converter (V).
    pub source_voltage: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub i_min: f64,
    pub i_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridParameters {
    pub nodes: Vec<NodeParams>,
    /// Line resistances (Ω), indexed like the topology edges.
    pub line_resistance: Vec<f64>,
}

impl GridParameters {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn check_dimensions(&self, topology: &Topology) -> Result<(), GridError> {
        if self.nodes.len() != topology.node_count() {
            return Err(GridError::Dimension {
                what: "node parameters",
                expected: topology.node_count(),
                actual: self.nodes.len(),
            });
        }
        if self.line_resistance.len() != topology.edge_count() {
            return Err(GridError::Dimension {
                what: "line resistances",
                expected: topology.edge_count(),
                actual: self.line_resistance.len(),
            });
        }
        Ok(())
    }

    /// Copy with every plant load conductance multiplied by `factor`.
    ///
    /// The known bounds `load_min`/`load_max` are left alone: they describe
    /// what the controllers were designed for, not what the plant does.
    pub fn with_load_scaled(&self, factor: f64) -> Self {
        let mut scaled = self.clone();
        for node in &mut scaled.nodes {
            node.load *= factor;
        }
        scaled
    }
}

/// Stacked inductor currents and load voltages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
}

impl GridState {
    pub fn new(current: Vec<f64>, voltage: Vec<f64>) -> Result<Self, GridError> {
        if current.len() != voltage.len() {
            return Err(GridError::Dimension {
                what: "voltage vector",
                expected: current.len(),
                actual: voltage.len(),
            });
        }
        Ok(Self { current, voltage })
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.current
            .iter()
            .chain(&self.voltage)
            .all(|x| x.is_finite())
    }
}

/// Time derivative of a [`GridState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
}

/// Topology, incidence matrix and parameters bundled for evaluation.
#[derive(Debug, Clone)]
pub struct GridModel {
    topology: Topology,
    incidence: IncidenceMatrix,
    params: GridParameters,
}

impl GridModel {
    pub fn new(topology: Topology, params: GridParameters) -> Result<Self, GridError> {
        params.check_dimensions(&topology)?;
        let incidence = topology.incidence_matrix();
        Ok(Self {
            topology,
            incidence,
            params,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn params(&self) -> &GridParameters {
        &self.params
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    /// Same network with different parameters (e.g. after a load event).
    pub fn with_params(&self, params: GridParameters) -> Result<Self, GridError> {
        params.check_dimensions(&self.topology)?;
        Ok(Self {
            topology: self.topology.clone(),
            incidence: self.incidence.clone(),
            params,
        })
    }

    /// `G_p = G + B R⁻¹ Bᵀ`, assembled edge by edge so that the result is
    /// exactly symmetric.
    pub fn effective_conductance(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let mut gp = DMatrix::zeros(n, n);
        for (i, node) in self.params.nodes.iter().enumerate() {
            gp[(i, i)] = node.load;
        }
        for (e, &r) in self.topology.edges.iter().zip(&self.params.line_resistance) {
            let g = 1.0 / r;
            gp[(e.head, e.head)] += g;
            gp[(e.tail, e.tail)] += g;
            gp[(e.head, e.tail)] -= g;
            gp[(e.tail, e.head)] -= g;
        }
        gp
    }

    /// Net current leaving each node through the lines, `B R⁻¹ Bᵀ V`.
    pub fn line_injection(&self, voltage: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; voltage.len()];
        for (e, &r) in self.topology.edges.iter().zip(&self.params.line_resistance) {
            let flow = (voltage[e.head] - voltage[e.tail]) / r;
            out[e.head] += flow;
            out[e.tail] -= flow;
        }
        out
    }

    pub fn dynamics(&self, state: &GridState, duty: &[f64]) -> Result<StateDerivative, GridError> {
        let n = self.node_count();
        for (what, len) in [
            ("current vector", state.current.len()),
            ("voltage vector", state.voltage.len()),
            ("duty vector", duty.len()),
        ] {
            if len != n {
                return Err(GridError::Dimension {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        let lines = self.line_injection(&state.voltage);
        let mut d_current = Vec::with_capacity(n);
        let mut d_voltage = Vec::with_capacity(n);
        for (i, node) in self.params.nodes.iter().enumerate() {
            let v = state.voltage[i];
            d_current.push((node.source_voltage * duty[i] - v) / node.inductance);
            d_voltage.push((state.current[i] - node.load * v - lines[i]) / node.capacitance);
        }
        Ok(StateDerivative {
            current: d_current,
            voltage: d_voltage,
        })
    }

    /// Steady state `(Ī, V̄)` held by the constant duty ratio `ū`:
    /// `V̄ = Vs∘ū` and `Ī = G_p V̄`.
    pub fn forced_equilibrium(&self, duty: &[f64]) -> Result<GridState, GridError> {
        let n = self.node_count();
        if duty.len() != n {
            return Err(GridError::Dimension {
                what: "duty vector",
                expected: n,
                actual: duty.len(),
            });
        }
        let voltage: Vec<f64> = self
            .params
            .nodes
            .iter()
            .zip(duty)
            .map(|(node, &u)| node.source_voltage * u)
            .collect();
        let lines = self.line_injection(&voltage);
        let current = self
            .params
            .nodes
            .iter()
            .zip(&voltage)
            .zip(&lines)
            .map(|((node, &v), &l)| node.load * v + l)
            .collect();
        Ok(GridState { current, voltage })
    }
}

/// One named assumption check with the nodes (or lines) that fail it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub offenders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const CHECK_POSITIVE: &str = "positive-parameters";
pub const CHECK_LINES: &str = "positive-line-resistance";
pub const CHECK_LOAD_INTERVAL: &str = "load-interval";
pub const CHECK_VOLTAGE_BOUNDS: &str = "voltage-bounds";
pub const CHECK_CURRENT_BOUNDS: &str = "current-bounds";

fn node_check(
    params: &GridParameters,
    name: &'static str,
    description: &'static str,
    ok: impl Fn(&NodeParams) -> bool,
) -> AssumptionCheck {
    let offenders: Vec<usize> = params
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, p)| !ok(p))
        .map(|(i, _)| i)
        .collect();
    AssumptionCheck {
        name,
        description,
        passed: offenders.is_empty(),
        offenders,
    }
}

/// Checks the standing assumptions on the parameters. Never fails; each
/// violated assumption becomes a report entry listing offending indices.
pub fn validate_assumptions(params: &GridParameters) -> ValidationReport {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    let mut checks = vec![
        node_check(
            params,
            CHECK_POSITIVE,
            "L, C, G, G_l, G_h and V_s are finite and strictly positive",
            |p| {
                [
                    p.inductance,
                    p.capacitance,
                    p.load,
                    p.load_min,
                    p.load_max,
                    p.source_voltage,
                ]
                .into_iter()
                .all(positive)
            },
        ),
        node_check(
            params,
            CHECK_LOAD_INTERVAL,
            "G_l <= G <= G_h",
            |p| p.load_min <= p.load && p.load <= p.load_max,
        ),
        node_check(
            params,
            CHECK_VOLTAGE_BOUNDS,
            "v_l <= v_h < V_s",
            |p| p.v_min <= p.v_max && p.v_max < p.source_voltage,
        ),
        node_check(params, CHECK_CURRENT_BOUNDS, "I_l <= I_h", |p| {
            p.i_min <= p.i_max
        }),
    ];
    let bad_lines: Vec<usize> = params
        .line_resistance
        .iter()
        .enumerate()
        .filter(|(_, &r)| !positive(r))
        .map(|(k, _)| k)
        .collect();
    checks.insert(
        1,
        AssumptionCheck {
            name: CHECK_LINES,
            description: "every line resistance is finite and strictly positive",
            passed: bad_lines.is_empty(),
            offenders: bad_lines,
        },
    );
    ValidationReport { checks }
}
