//! Subcommands of the `dcgrid` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{parse_config, ConfigError, ExitCode, LoadedConfig};
use crate::controller::NodeLimits;
use crate::grid::{validate_assumptions, GridModel, GridState};
use crate::plot::{emit_plots, Guides};
use crate::report::{NodeSafety, ViolationInterval};
use crate::sim::{run_scenario, SimError};
use crate::trace::{read_trace_file, write_trace_file, TraceTable};

/// Excursions up to this size (V or A) are attributed to discretization.
pub const SAFETY_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "dcgrid", version, about = "DC microgrid simulator with barrier-function safety controllers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write the trace, the safety report and plots.
    Run {
        config: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        /// Output directory (overrides the scenario file).
        #[arg(long, env = "DCGRID_OUT_DIR")]
        out: Option<PathBuf>,
        /// Resample each plant load uniformly inside its known bounds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Print the forced equilibrium holding every node at a target voltage.
    Equilibrium {
        config: PathBuf,
        #[arg(long, default_value_t = 230.0)]
        voltage: f64,
    },
    /// Check a scenario file against the schema and the parameter assumptions.
    Validate { config: PathBuf },
    /// Render plots from a trace file.
    Plot {
        trace: PathBuf,
        /// Scenario file supplying the bound guide lines.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "DCGRID_OUT_DIR", default_value = "plots")]
        out: PathBuf,
    },
}

pub fn execute(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Run {
            config,
            dt,
            duration,
            out,
            seed,
            no_plots,
        } => cmd_run(&RunOptions {
            config,
            dt,
            duration,
            out,
            seed,
            plots: !no_plots,
        }),
        Command::Equilibrium { config, voltage } => cmd_equilibrium(&config, voltage),
        Command::Validate { config } => cmd_validate(&config),
        Command::Plot { trace, config, out } => cmd_plot(&trace, config.as_deref(), &out),
    }
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    e.exit_code()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub plots: bool,
}

#[derive(Debug, Serialize)]
pub struct NodeSummary {
    pub node: usize,
    pub entered_safe_set: bool,
    pub post_entry_violations: Vec<ViolationInterval>,
    #[serde(flatten)]
    pub safety: NodeSafety,
}

/// Contents of the report file.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config: String,
    pub duration: f64,
    pub dt: f64,
    pub samples: usize,
    pub seed: Option<u64>,
    pub plant_load: Vec<f64>,
    pub tolerance: f64,
    pub safe_after_entry: bool,
    pub final_state: GridState,
    pub nodes: Vec<NodeSummary>,
}

fn sim_failure(e: &SimError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        SimError::NumericalDivergence { .. } => ExitCode::Numerical,
        SimError::Infeasible { .. } => ExitCode::InfeasibleController,
        SimError::Assumptions(_) | SimError::Controller(_) => ExitCode::Assumption,
        SimError::Scenario(_) | SimError::Grid(_) => ExitCode::Schema,
    }
}

/// Loads a scenario and applies the command-line overrides.
pub fn prepare_run(opts: &RunOptions) -> Result<LoadedConfig, ConfigError> {
    let mut raw = crate::config::read_config(&opts.config)?;
    if let Some(dt) = opts.dt {
        raw.simulation.dt = dt;
    }
    if let Some(duration) = opts.duration {
        raw.simulation.duration = duration;
        // a shortened run simply ends before later events
        raw.simulation.events.retain(|e| {
            let keep = e.time <= duration;
            if !keep {
                log::warn!("dropping load event at t = {} s beyond --duration {duration}", e.time);
            }
            keep
        });
    }
    if let Some(seed) = opts.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for node in &mut raw.nodes {
            if node.load_min < node.load_max {
                node.load = rng.gen_range(node.load_min..=node.load_max);
            }
        }
    }
    raw.load()
}

pub fn cmd_run(opts: &RunOptions) -> ExitCode {
    let loaded = match prepare_run(opts) {
        Ok(l) => l,
        Err(e) => return config_failure(&e),
    };
    let out_dir = opts.out.clone().unwrap_or_else(|| loaded.config.output.dir.clone());

    let output = match run_scenario(&loaded.scenario, &loaded.params, &loaded.topology) {
        Ok(o) => o,
        Err(e) => return sim_failure(&e),
    };

    let nodes: Vec<NodeSummary> = output
        .report
        .nodes
        .iter()
        .map(|n| NodeSummary {
            node: n.node + 1,
            entered_safe_set: n.first_entry.is_some(),
            post_entry_violations: n.post_entry_violations(SAFETY_TOLERANCE),
            safety: n.clone(),
        })
        .collect();
    let safe = output.report.safe_after_entry(SAFETY_TOLERANCE);
    let report = RunReport {
        config: opts.config.display().to_string(),
        duration: loaded.scenario.duration,
        dt: loaded.scenario.dt,
        samples: output.trace.len(),
        seed: opts.seed,
        plant_load: loaded.params.nodes.iter().map(|p| p.load).collect(),
        tolerance: SAFETY_TOLERANCE,
        safe_after_entry: safe,
        final_state: output.trace.last_state().expect("trace is never empty"),
        nodes,
    };

    let table = TraceTable::from(&output.trace);
    let written = (|| -> Result<Vec<PathBuf>, Box<dyn std::error::Error>> {
        fs::create_dir_all(&out_dir)?;
        let trace_path = out_dir.join(&loaded.config.output.trace);
        let report_path = out_dir.join(&loaded.config.output.report);
        write_trace_file(&trace_path, &table)?;
        fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
        let mut written = vec![trace_path, report_path];
        if opts.plots && loaded.config.output.plots {
            written.extend(emit_plots(&table, Some(&Guides::from_params(&loaded.params)), &out_dir)?);
        }
        Ok(written)
    })();
    match written {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: writing output: {e}");
            return ExitCode::Io;
        }
    }

    for n in &report.nodes {
        match n.safety.first_entry {
            None => println!("DGU {}: never entered its joint safe set", n.node),
            Some(t) => println!(
                "DGU {}: entered at t = {t:.6} s, {} post-entry violation(s); V in [{:.4}, {:.4}] V, I in [{:.4}, {:.4}] A",
                n.node,
                n.post_entry_violations.len(),
                n.safety.voltage_min,
                n.safety.voltage_max,
                n.safety.current_min,
                n.safety.current_max
            ),
        }
    }
    if safe {
        ExitCode::Success
    } else {
        eprintln!("safety objectives not met after entry (tolerance {SAFETY_TOLERANCE})");
        ExitCode::SafetyViolation
    }
}

/// Forced equilibrium `(ū, Ī, V̄)` with every load voltage at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPoint {
    pub duty: Vec<f64>,
    pub state: GridState,
    /// Nodes whose equilibrium current leaves `[Ĩ_l, Ĩ_h]`.
    pub outside_current_band: Vec<usize>,
}

pub fn equilibrium_at(loaded: &LoadedConfig, target: f64) -> Result<EquilibriumPoint, ConfigError> {
    let min_source = loaded
        .params
        .nodes
        .iter()
        .map(|p| p.source_voltage)
        .fold(f64::INFINITY, f64::min);
    if !(target > 0.0 && target < min_source) {
        return Err(ConfigError::Assumption(vec![format!(
            "target voltage {target} must lie in (0, {min_source}) so that every duty ratio is below 1"
        )]));
    }
    let model = GridModel::new(loaded.topology.clone(), loaded.params.clone())
        .map_err(|e| ConfigError::Schema(vec![e.to_string()]))?;
    let duty: Vec<f64> = loaded.params.nodes.iter().map(|p| target / p.source_voltage).collect();
    let state = model
        .forced_equilibrium(&duty)
        .map_err(|e| ConfigError::Schema(vec![e.to_string()]))?;
    let outside_current_band = loaded
        .params
        .nodes
        .iter()
        .zip(&state.current)
        .enumerate()
        .filter(|(_, (p, &i))| !NodeLimits::from(*p).effective_current_bounds().contains(i))
        .map(|(k, _)| k)
        .collect();
    Ok(EquilibriumPoint {
        duty,
        state,
        outside_current_band,
    })
}

pub fn cmd_equilibrium(config: &Path, target: f64) -> ExitCode {
    let result = parse_config(config).and_then(|loaded| {
        let eq = equilibrium_at(&loaded, target)?;
        Ok((loaded, eq))
    });
    let (loaded, eq) = match result {
        Ok(x) => x,
        Err(e) => return config_failure(&e),
    };
    println!("{:>5} {:>12} {:>12} {:>12} {:>12} {:>12}", "DGU", "u", "I (A)", "V (V)", "I~_l", "I~_h");
    for (i, p) in loaded.params.nodes.iter().enumerate() {
        let b = NodeLimits::from(p).effective_current_bounds();
        println!(
            "{:>5} {:>12.8} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            i + 1,
            eq.duty[i],
            eq.state.current[i],
            eq.state.voltage[i],
            b.lower,
            b.upper
        );
    }
    for &i in &eq.outside_current_band {
        eprintln!("warning: DGU {}: equilibrium current lies outside [I~_l, I~_h]", i + 1);
    }
    ExitCode::Success
}

pub fn cmd_validate(config: &Path) -> ExitCode {
    let raw = match crate::config::read_config(config) {
        Ok(r) => r,
        Err(e) => return config_failure(&e),
    };
    let schema = raw.schema_errors();
    if !schema.is_empty() {
        return config_failure(&ConfigError::Schema(schema));
    }
    let params = crate::grid::GridParameters {
        nodes: raw.nodes.clone(),
        line_resistance: raw.topology.edges.iter().map(|e| e.resistance).collect(),
    };
    for check in validate_assumptions(&params).checks {
        let status = if check.passed { "pass" } else { "FAIL" };
        let at = if check.passed {
            String::new()
        } else {
            let idx: Vec<String> = check.offenders.iter().map(|i| (i + 1).to_string()).collect();
            format!(" at {}", idx.join(", "))
        };
        println!("{status:4}  {:<26} {}{at}", check.name, check.description);
    }
    match raw.load() {
        Ok(_) => {
            println!("ok");
            ExitCode::Success
        }
        Err(e) => config_failure(&e),
    }
}

pub fn cmd_plot(trace: &Path, config: Option<&Path>, out: &Path) -> ExitCode {
    let table = match read_trace_file(trace) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", trace.display());
            return ExitCode::Schema;
        }
    };
    let guides = match config.map(parse_config).transpose() {
        Ok(loaded) => loaded.map(|l| Guides::from_params(&l.params)),
        Err(e) => return config_failure(&e),
    };
    match emit_plots(&table, guides.as_ref(), out) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::Success
        }
        Err(crate::plot::PlotError::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::Io
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::Schema
        }
    }
}
