//! Decentralized control-barrier-function safety controllers for DC
//! microgrids, with a fixed-step simulator and the tooling around it.

pub mod case_study;
pub mod cli;
pub mod config;
pub mod controller;
pub mod grid;
pub mod plot;
pub mod report;
pub mod sim;
pub mod trace;

pub use controller::{
    barrier_values, constraint_interval, solve_relaxed, solve_strict, zcbf_monitor, ControlError,
    ControllerSpec, DutyDecision, EffectiveCurrentBounds, Mode, NodeController, NodeGains,
    NodeLimits, NodeObservation,
};
pub use grid::{
    validate_assumptions, Edge, GridError, GridModel, GridParameters, GridState, NodeParams,
    Topology,
};
pub use report::{safety_report, SafetyReport};
pub use sim::{integrate_step, run_scenario, LoadEvent, Scenario, SimError, SwitchPolicy, Trace};
