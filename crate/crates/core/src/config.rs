//! Scenario files.
//!
//! A scenario is a single JSON document. Node indices in the file are
//! one-based; everything in memory is zero-based. Unknown keys are rejected,
//! and every field is checked before any numeric work starts. See
//! `scenarios/README.md` for the schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_study;
use crate::controller::{ControllerSpec, EffectiveCurrentBounds, Mode, NodeGains};
use crate::grid::{validate_assumptions, Edge, GridParameters, GridState, NodeParams, Topology};
use crate::sim::{default_initial_state, LoadEvent, Scenario, SwitchPolicy};

/// Process exit codes of the `dcgrid` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Success = 0,
    Io = 1,
    Schema = 2,
    Assumption = 3,
    Numerical = 4,
    InfeasibleController = 5,
    SafetyViolation = 6,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema errors:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("assumption check failed:\n  {}", .0.join("\n  "))]
    Assumption(Vec<String>),
}

impl ConfigError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            ConfigError::Io { .. } => ExitCode::Io,
            ConfigError::Schema(_) => ExitCode::Schema,
            ConfigError::Assumption(_) => ExitCode::Assumption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub topology: TopologyConfig,
    pub nodes: Vec<NodeParams>,
    pub controller: ControllerConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub edges: Vec<EdgeConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    pub head: usize,
    pub tail: usize,
    /// Ω
    pub resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: Mode,
    pub eta_l: Vec<f64>,
    pub eta_h: Vec<f64>,
    pub p_l: Vec<f64>,
    pub p_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub duration: f64,
    pub dt: f64,
    /// Defaults to `0.95·Ĩ_l` per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_current: Option<Vec<f64>>,
    /// Defaults to the middle of `[v_l, v_h]` per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_voltage: Option<Vec<f64>>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    pub switch_policy: SwitchPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub time: f64,
    pub load_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_plots")]
    pub plots: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_trace() -> String {
    "trace.csv".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_plots() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            trace: default_trace(),
            report: default_report(),
            plots: default_plots(),
        }
    }
}

/// A scenario file turned into simulator inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub params: GridParameters,
    pub topology: Topology,
}

impl ScenarioConfig {
    /// The four-DGU case study with its default initial condition spelled out.
    pub fn case_study() -> Self {
        let params = case_study::parameters();
        let topology = case_study::topology();
        let scenario = case_study::scenario();
        let gains = &scenario.controller.gains;
        ScenarioConfig {
            notes: vec![
                "Four-DGU ring with the reference case-study constants, bounds and gains.".into(),
                "Not part of the reference data, chosen here: source_voltage = 380 V, initial voltage 230 V, initial current 0.95 * I~_l, RK4 with dt = 1e-5 s.".into(),
                "Load values are conductances (S); load_min/load_max are 0.95x and 1.05x the load.".into(),
            ],
            topology: TopologyConfig {
                nodes: topology.node_count(),
                edges: topology
                    .edges()
                    .iter()
                    .zip(&params.line_resistance)
                    .map(|(e, &r)| EdgeConfig {
                        head: e.head + 1,
                        tail: e.tail + 1,
                        resistance: r,
                    })
                    .collect(),
            },
            nodes: params.nodes.clone(),
            controller: ControllerConfig {
                mode: scenario.controller.mode,
                eta_l: gains.iter().map(|g| g.eta_l).collect(),
                eta_h: gains.iter().map(|g| g.eta_h).collect(),
                p_l: gains.iter().map(|g| g.p_l).collect(),
                p_h: gains.iter().map(|g| g.p_h).collect(),
            },
            simulation: SimulationConfig {
                duration: scenario.duration,
                dt: scenario.dt,
                initial_current: Some(scenario.initial.current.clone()),
                initial_voltage: Some(scenario.initial.voltage.clone()),
                events: scenario
                    .events
                    .iter()
                    .map(|e| EventConfig {
                        time: e.time,
                        load_scale: e.factor,
                    })
                    .collect(),
                switch_policy: scenario.switch_policy,
            },
            output: OutputConfig::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Schema(vec![e.to_string()]))
    }

    /// Field-level schema checks. Returns every problem found, each prefixed
    /// with the path of the offending field.
    pub fn schema_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let n = self.topology.nodes;
        let mut positive = |path: String, x: f64| {
            if !(x.is_finite() && x > 0.0) {
                errors.push(format!("{path}: must be finite and > 0, got {x}"));
            }
        };

        for (k, e) in self.topology.edges.iter().enumerate() {
            positive(format!("topology.edges[{k}].resistance"), e.resistance);
        }
        for (i, p) in self.nodes.iter().enumerate() {
            for (field, x) in [
                ("inductance", p.inductance),
                ("capacitance", p.capacitance),
                ("load", p.load),
                ("load_min", p.load_min),
                ("load_max", p.load_max),
                ("source_voltage", p.source_voltage),
            ] {
                positive(format!("nodes[{i}].{field}"), x);
            }
        }
        for (field, values) in [
            ("eta_l", &self.controller.eta_l),
            ("eta_h", &self.controller.eta_h),
            ("p_l", &self.controller.p_l),
            ("p_h", &self.controller.p_h),
        ] {
            for (i, &x) in values.iter().enumerate() {
                positive(format!("controller.{field}[{i}]"), x);
            }
        }
        positive("simulation.dt".into(), self.simulation.dt);
        positive("simulation.duration".into(), self.simulation.duration);
        for (k, e) in self.simulation.events.iter().enumerate() {
            positive(format!("simulation.events[{k}].load_scale"), e.load_scale);
        }

        if n == 0 {
            errors.push("topology.nodes: must be at least 1".into());
        }
        if self.nodes.len() != n {
            errors.push(format!("nodes: expected {n} entries, got {}", self.nodes.len()));
        }
        for (field, len) in [
            ("controller.eta_l", self.controller.eta_l.len()),
            ("controller.eta_h", self.controller.eta_h.len()),
            ("controller.p_l", self.controller.p_l.len()),
            ("controller.p_h", self.controller.p_h.len()),
        ] {
            if len != n {
                errors.push(format!("{field}: expected {n} entries, got {len}"));
            }
        }
        for (field, values) in [
            ("simulation.initial_current", &self.simulation.initial_current),
            ("simulation.initial_voltage", &self.simulation.initial_voltage),
        ] {
            if let Some(values) = values {
                if values.len() != n {
                    errors.push(format!("{field}: expected {n} entries, got {}", values.len()));
                }
                if let Some(i) = values.iter().position(|x| !x.is_finite()) {
                    errors.push(format!("{field}[{i}]: must be finite"));
                }
            }
        }
        for (i, p) in self.nodes.iter().enumerate() {
            for (field, x) in [
                ("v_min", p.v_min),
                ("v_max", p.v_max),
                ("i_min", p.i_min),
                ("i_max", p.i_max),
            ] {
                if !x.is_finite() {
                    errors.push(format!("nodes[{i}].{field}: must be finite"));
                }
            }
        }

        let sim = &self.simulation;
        if sim.dt > 0.0 && sim.duration < sim.dt {
            errors.push(format!(
                "simulation.duration: {} is shorter than dt {}",
                sim.duration, sim.dt
            ));
        }
        for (k, e) in sim.events.iter().enumerate() {
            if !(0.0..=sim.duration).contains(&e.time) {
                errors.push(format!(
                    "simulation.events[{k}].time: {} outside [0, {}]",
                    e.time, sim.duration
                ));
            }
        }

        for (k, e) in self.topology.edges.iter().enumerate() {
            for (end, node) in [("head", e.head), ("tail", e.tail)] {
                if node == 0 || node > n {
                    errors.push(format!(
                        "topology.edges[{k}].{end}: node {node} outside 1..={n}"
                    ));
                }
            }
            if e.head == e.tail {
                errors.push(format!("topology.edges[{k}]: self-loop on node {}", e.head));
            }
        }
        if errors.is_empty() {
            if let Err(e) = Topology::new(n, self.edges()) {
                errors.push(format!("topology: {e}"));
            }
        }
        errors
    }

    fn edges(&self) -> Vec<Edge> {
        self.topology
            .edges
            .iter()
            .map(|e| Edge {
                head: e.head - 1,
                tail: e.tail - 1,
            })
            .collect()
    }

    fn params(&self) -> GridParameters {
        GridParameters {
            nodes: self.nodes.clone(),
            line_resistance: self.topology.edges.iter().map(|e| e.resistance).collect(),
        }
    }

    fn needs_joint_bounds(&self) -> bool {
        matches!(self.controller.mode, Mode::Joint | Mode::Relaxed)
            || self.simulation.switch_policy == SwitchPolicy::RelaxedUntilFeasible
    }

    /// Validates and converts into simulator inputs.
    pub fn load(self) -> Result<LoadedConfig, ConfigError> {
        let errors = self.schema_errors();
        if !errors.is_empty() {
            return Err(ConfigError::Schema(errors));
        }

        let params = self.params();
        let report = validate_assumptions(&params);
        let mut failures: Vec<String> = report
            .failures()
            .map(|c| {
                let nodes: Vec<String> = c.offenders.iter().map(|i| (i + 1).to_string()).collect();
                format!("{} ({}) fails at {}", c.name, c.description, nodes.join(", "))
            })
            .collect();
        if self.needs_joint_bounds() {
            for (i, p) in params.nodes.iter().enumerate() {
                if let Err(e) = EffectiveCurrentBounds::for_node(i, p) {
                    failures.push(format!("joint-safe-set: node {}: {e}", i + 1));
                }
            }
        }
        if !failures.is_empty() {
            return Err(ConfigError::Assumption(failures));
        }

        let topology = Topology::new(self.topology.nodes, self.edges())
            .map_err(|e| ConfigError::Schema(vec![format!("topology: {e}")]))?;
        let default_initial = default_initial_state(&params, case_study::INITIAL_CURRENT_FRACTION);
        let initial = GridState {
            current: self
                .simulation
                .initial_current
                .clone()
                .unwrap_or(default_initial.current),
            voltage: self
                .simulation
                .initial_voltage
                .clone()
                .unwrap_or(default_initial.voltage),
        };
        let c = &self.controller;
        let gains = (0..self.topology.nodes)
            .map(|i| NodeGains {
                eta_l: c.eta_l[i],
                eta_h: c.eta_h[i],
                p_l: c.p_l[i],
                p_h: c.p_h[i],
            })
            .collect();
        let scenario = Scenario {
            duration: self.simulation.duration,
            dt: self.simulation.dt,
            initial,
            controller: ControllerSpec {
                mode: c.mode,
                gains,
            },
            events: self
                .simulation
                .events
                .iter()
                .map(|e| LoadEvent {
                    time: e.time,
                    factor: e.load_scale,
                })
                .collect(),
            switch_policy: self.simulation.switch_policy,
        };
        Ok(LoadedConfig {
            config: self,
            scenario,
            params,
            topology,
        })
    }
}

pub fn read_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    read_config(path)?.load()
}

pub fn write_config(config: &ScenarioConfig, path: &Path) -> std::io::Result<()> {
    fs::write(path, config.to_json() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_loads() {
        let loaded = ScenarioConfig::case_study().load().unwrap();
        assert_eq!(loaded.params, case_study::parameters());
        assert_eq!(loaded.topology, case_study::topology());
        assert_eq!(loaded.scenario, case_study::scenario());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut value: serde_json::Value =
            serde_json::from_str(&ScenarioConfig::case_study().to_json()).unwrap();
        value["controller"]["gain_schedule"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json(&value.to_string()).unwrap_err();
        assert!(matches!(err, ConfigError::Schema(_)));
        assert!(err.to_string().contains("gain_schedule"));
    }

    #[test]
    fn negative_inductance_is_a_schema_error() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.nodes[1].inductance = -2e-3;
        match cfg.load().unwrap_err() {
            ConfigError::Schema(errors) => {
                assert!(errors.iter().any(|e| e.starts_with("nodes[1].inductance")), "{errors:?}")
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn voltage_bound_above_source_is_an_assumption_error() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.nodes[2].v_max = 400.0;
        let err = cfg.load().unwrap_err();
        assert_eq!(err.exit_code(), ExitCode::Assumption);
        let text = err.to_string();
        assert!(text.contains("voltage-bounds") && text.contains("fails at 3"), "{text}");
    }

    #[test]
    fn empty_joint_set_is_an_assumption_error() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.nodes[0].i_max = 12.0;
        let err = cfg.load().unwrap_err();
        assert!(err.to_string().contains("joint-safe-set: node 1"), "{err}");
    }

    #[test]
    fn collects_several_schema_errors() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.topology.edges[0].head = 9;
        cfg.controller.eta_h.pop();
        cfg.simulation.dt = 0.0;
        let ConfigError::Schema(errors) = cfg.load().unwrap_err() else {
            panic!("expected schema errors");
        };
        assert!(errors.iter().any(|e| e.starts_with("topology.edges[0].head")));
        assert!(errors.iter().any(|e| e.starts_with("controller.eta_h")));
        assert!(errors.iter().any(|e| e.starts_with("simulation.dt")));
    }

    #[test]
    fn disconnected_topology_is_a_schema_error() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.topology.edges.truncate(1);
        let ConfigError::Schema(errors) = cfg.load().unwrap_err() else {
            panic!("expected schema errors");
        };
        assert!(errors[0].contains("not connected"), "{errors:?}");
    }

    #[test]
    fn defaults_fill_initial_state() {
        let mut cfg = ScenarioConfig::case_study();
        cfg.simulation.initial_current = None;
        cfg.simulation.initial_voltage = None;
        let loaded = cfg.load().unwrap();
        assert_eq!(
            loaded.scenario.initial,
            default_initial_state(&loaded.params, case_study::INITIAL_CURRENT_FRACTION)
        );
        assert_eq!(loaded.scenario.initial.voltage, vec![230.0; 4]);
    }
}
