//! Fixed-step simulation of the closed loop.
//!
//! The plant is integrated with classical RK4 while every node controller
//! is sampled once per step and held (zero-order hold) over the step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    BarrierValues, ControlError, ControllerSpec, Mode, NodeController, NodeLimits, NodeObservation,
};
use crate::grid::{validate_assumptions, GridError, GridModel, GridParameters, GridState, Topology};
use crate::report::{safety_report, SafetyReport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("parameter assumptions violated: {0}")]
    Assumptions(String),
    #[error("controller setup failed: {0}")]
    Controller(#[from] ControlError),
    #[error("node {node} at step {step} (t = {t} s): {source}")]
    Infeasible {
        node: usize,
        step: usize,
        t: f64,
        source: ControlError,
    },
    #[error("numerical divergence at step {step} (t = {t} s): non-finite state")]
    NumericalDivergence { step: usize, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchPolicy {
    /// Use the configured controller mode at every step.
    AlwaysStrict,
    /// Slack-relaxed QP until the node enters its joint safe set, then the
    /// strict QP for the rest of the run.
    RelaxedUntilFeasible,
}

/// Multiplies every plant load conductance by `factor` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadEvent {
    pub time: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub initial: GridState,
    pub controller: ControllerSpec,
    pub events: Vec<LoadEvent>,
    pub switch_policy: SwitchPolicy,
}

impl Scenario {
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self, n: usize) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::Scenario(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(SimError::Scenario(format!(
                "duration {} must be at least dt {}",
                self.duration, self.dt
            )));
        }
        for e in &self.events {
            if !(0.0..=self.duration).contains(&e.time) {
                return Err(SimError::Scenario(format!(
                    "event time {} outside [0, {}]",
                    e.time, self.duration
                )));
            }
            if !(e.factor.is_finite() && e.factor > 0.0) {
                return Err(SimError::Scenario(format!(
                    "load scale factor must be positive, got {}",
                    e.factor
                )));
            }
        }
        if self.initial.len() != n || self.initial.voltage.len() != n {
            return Err(SimError::Scenario(format!(
                "initial state has {} entries, grid has {n} nodes",
                self.initial.len()
            )));
        }
        if !self.initial.is_finite() {
            return Err(SimError::Scenario("initial state is not finite".into()));
        }
        self.controller.validate(n)?;
        Ok(())
    }
}

/// One logged sample. Controls, slacks and barrier margins are the values
/// computed at `t` and held over `[t, t + dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub current: Vec<f64>,
    pub voltage: Vec<f64>,
    pub duty: Vec<f64>,
    pub eps_l: Vec<f64>,
    pub eps_h: Vec<f64>,
    /// `true` once the node runs the strict QP.
    pub strict: Vec<bool>,
    pub barriers: Vec<BarrierValues>,
    /// `dB_l/dt + (η_l/L)·B_l` and `dB_h/dt + (η_h/L)·B_h` under the held
    /// control, for the current barriers of the active mode.
    pub margin_l: Vec<f64>,
    pub margin_h: Vec<f64>,
    /// Voltage outside `[v_l, v_h]`.
    pub voltage_violation: Vec<bool>,
    /// Current outside `[I_l, I_h]`.
    pub current_violation: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn node_count(&self) -> usize {
        self.records.first().map_or(0, |r| r.current.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_state(&self) -> Option<GridState> {
        self.records.last().map(|r| GridState {
            current: r.current.clone(),
            voltage: r.voltage.clone(),
        })
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

fn rk4(
    model: &GridModel,
    state: &GridState,
    duty: &[f64],
    dt: f64,
    k1: crate::grid::StateDerivative,
) -> Result<GridState, GridError> {
    let stage = |k: &crate::grid::StateDerivative, h: f64| GridState {
        current: axpy(&state.current, h, &k.current),
        voltage: axpy(&state.voltage, h, &k.voltage),
    };
    let k2 = model.dynamics(&stage(&k1, 0.5 * dt), duty)?;
    let k3 = model.dynamics(&stage(&k2, 0.5 * dt), duty)?;
    let k4 = model.dynamics(&stage(&k3, dt), duty)?;
    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| x[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect()
    };
    Ok(GridState {
        current: combine(&state.current, &k1.current, &k2.current, &k3.current, &k4.current),
        voltage: combine(&state.voltage, &k1.voltage, &k2.voltage, &k3.voltage, &k4.voltage),
    })
}

/// One RK4 step of the averaged dynamics with `duty` held constant.
pub fn integrate_step(
    model: &GridModel,
    state: &GridState,
    duty: &[f64],
    dt: f64,
    step: usize,
) -> Result<GridState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::Scenario(format!("dt must be positive, got {dt}")));
    }
    let k1 = model.dynamics(state, duty)?;
    let next = rk4(model, state, duty, dt, k1)?;
    if !next.is_finite() {
        return Err(SimError::NumericalDivergence {
            step,
            t: (step + 1) as f64 * dt,
        });
    }
    Ok(next)
}

/// Voltages in the middle of `[v_l, v_h]`, currents at
/// `current_fraction · Ĩ_l`.
pub fn default_initial_state(params: &GridParameters, current_fraction: f64) -> GridState {
    let current = params
        .nodes
        .iter()
        .map(|p| current_fraction * NodeLimits::from(p).effective_current_bounds().lower)
        .collect();
    let voltage = params
        .nodes
        .iter()
        .map(|p| 0.5 * (p.v_min + p.v_max))
        .collect();
    GridState { current, voltage }
}

pub fn apply_event(params: &GridParameters, event: LoadEvent) -> GridParameters {
    params.with_load_scaled(event.factor)
}

/// Largest step that still resolves the fastest electrical time constants,
/// `0.1 · min(C_i / G_p,ii, L_i / η_i)`.
pub fn recommended_max_dt(model: &GridModel, spec: &ControllerSpec) -> f64 {
    let gp = model.effective_conductance();
    model
        .params()
        .nodes
        .iter()
        .zip(&spec.gains)
        .enumerate()
        .map(|(i, (p, g))| {
            let rc = p.capacitance / gp[(i, i)];
            let rl = p.inductance / g.eta_l.max(g.eta_h);
            rc.min(rl)
        })
        .fold(f64::INFINITY, f64::min)
        * 0.1
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Trace,
    pub report: SafetyReport,
}

/// Runs a scenario from `t = 0` to `duration`, logging `steps + 1` records.
pub fn run_scenario(
    scenario: &Scenario,
    params: &GridParameters,
    topology: &Topology,
) -> Result<SimOutput, SimError> {
    let validation = validate_assumptions(params);
    if !validation.all_passed() {
        let failed: Vec<String> = validation
            .failures()
            .map(|c| format!("{} at {:?}", c.name, c.offenders))
            .collect();
        return Err(SimError::Assumptions(failed.join("; ")));
    }
    let n = topology.node_count();
    let mut model = GridModel::new(topology.clone(), params.clone())?;
    scenario.validate(n)?;

    let max_dt = recommended_max_dt(&model, &scenario.controller);
    if scenario.dt > max_dt {
        log::warn!(
            "dt = {} s exceeds 0.1x the fastest time constant ({} s)",
            scenario.dt,
            max_dt
        );
    }

    let strict_mode = match scenario.controller.mode {
        Mode::Relaxed => Mode::Joint,
        m => m,
    };
    let controllers = |mode: Mode| -> Result<Vec<NodeController>, ControlError> {
        params
            .nodes
            .iter()
            .zip(&scenario.controller.gains)
            .enumerate()
            .map(|(i, (p, g))| NodeController::new(i, p, *g, mode))
            .collect()
    };
    let strict = controllers(strict_mode)?;
    let relaxed = controllers(Mode::Relaxed)?;

    let mut latched = match (scenario.switch_policy, scenario.controller.mode) {
        (SwitchPolicy::AlwaysStrict, Mode::Relaxed) => vec![false; n],
        (SwitchPolicy::AlwaysStrict, _) => vec![true; n],
        (SwitchPolicy::RelaxedUntilFeasible, _) => vec![false; n],
    };
    let may_latch = scenario.switch_policy == SwitchPolicy::RelaxedUntilFeasible;

    let mut events = scenario.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut pending = events.into_iter().peekable();

    let steps = scenario.steps();
    let dt = scenario.dt;
    let mut state = scenario.initial.clone();
    let mut records = Vec::with_capacity(steps + 1);

    for step in 0..=steps {
        let t = step as f64 * dt;
        while let Some(event) = pending.next_if(|e| e.time <= t + 0.5 * dt) {
            log::debug!("t = {t}: scaling loads by {}", event.factor);
            model = model.with_params(apply_event(model.params(), event))?;
        }

        let mut duty = Vec::with_capacity(n);
        let mut eps_l = Vec::with_capacity(n);
        let mut eps_h = Vec::with_capacity(n);
        let mut barriers = Vec::with_capacity(n);
        for i in 0..n {
            let obs = NodeObservation {
                current: state.current[i],
                voltage: state.voltage[i],
            };
            if may_latch && !latched[i] && strict[i].limits.in_joint_safe_set(obs) {
                log::debug!("node {i} entered its joint safe set at t = {t}");
                latched[i] = true;
            }
            let controller = if latched[i] { &strict[i] } else { &relaxed[i] };
            let decision = controller.decide(obs).map_err(|source| SimError::Infeasible {
                node: i,
                step,
                t,
                source,
            })?;
            duty.push(decision.duty);
            eps_l.push(decision.eps_l);
            eps_h.push(decision.eps_h);
            barriers.push(controller.barriers(obs));
        }

        let k1 = model.dynamics(&state, &duty)?;
        let mut margin_l = Vec::with_capacity(n);
        let mut margin_h = Vec::with_capacity(n);
        let mut voltage_violation = Vec::with_capacity(n);
        let mut current_violation = Vec::with_capacity(n);
        for i in 0..n {
            let p = &params.nodes[i];
            let g = &scenario.controller.gains[i];
            let b = &barriers[i];
            margin_l.push(k1.current[i] + g.eta_l / p.inductance * b.cap_b_l);
            margin_h.push(-k1.current[i] + g.eta_h / p.inductance * b.cap_b_h);
            voltage_violation.push(!b.voltage_safe());
            current_violation.push(!(p.i_min <= state.current[i] && state.current[i] <= p.i_max));
        }

        let next = if step < steps {
            let next = rk4(&model, &state, &duty, dt, k1)?;
            if !next.is_finite() {
                return Err(SimError::NumericalDivergence { step, t });
            }
            Some(next)
        } else {
            None
        };

        records.push(TraceRecord {
            t,
            current: state.current.clone(),
            voltage: state.voltage.clone(),
            duty,
            eps_l,
            eps_h,
            strict: latched.clone(),
            barriers,
            margin_l,
            margin_h,
            voltage_violation,
            current_violation,
        });

        if let Some(next) = next {
            state = next;
        }
    }

    let trace = Trace { records };
    let report = safety_report(&trace, params);
    Ok(SimOutput { trace, report })
}
