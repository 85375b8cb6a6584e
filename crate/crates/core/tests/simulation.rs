mod common;

use dcgrid::case_study;
use dcgrid::controller::{ControllerSpec, Mode, NodeGains};
use dcgrid::grid::{GridModel, GridState};
use dcgrid::report::safety_report;
use dcgrid::sim::{integrate_step, run_scenario, Scenario, SwitchPolicy, Trace, TraceRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn decay_error(dt: f64, horizon: f64) -> f64 {
    let model = common::scalar_decay();
    let mut s = GridState {
        current: vec![0.0],
        voltage: vec![1.0],
    };
    let steps = (horizon / dt).round() as usize;
    for k in 0..steps {
        s = integrate_step(&model, &s, &[0.0], dt, k).unwrap();
    }
    (s.voltage[0] - (-horizon).exp()).abs()
}

#[test]
fn one_step_local_error_is_fifth_order() {
    let model = common::scalar_decay();
    let s = GridState {
        current: vec![0.0],
        voltage: vec![1.0],
    };
    for dt in [0.1, 0.05, 0.01] {
        let next = integrate_step(&model, &s, &[0.0], dt, 0).unwrap();
        assert!(next.current[0].abs() < 1e-290);
        let err = (next.voltage[0] - (-dt).exp()).abs();
        // RK4 on V̇ = −V reproduces the Taylor series through dt⁴.
        assert!(err <= dt.powi(5) / 120.0 * 1.01, "dt {dt}: {err}");
        assert!(err >= dt.powi(5) / 120.0 * 0.8, "dt {dt}: {err}");
    }
}

#[test]
fn global_error_falls_sixteenfold_per_halving() {
    let e1 = decay_error(0.1, 1.0);
    let e2 = decay_error(0.05, 1.0);
    let e3 = decay_error(0.025, 1.0);
    for ratio in [e1 / e2, e2 / e3] {
        assert!((ratio - 16.0).abs() <= 0.2 * 16.0, "ratio {ratio}");
    }
}

#[test]
fn equilibrium_is_a_fixed_point_of_the_step() {
    let model = GridModel::new(case_study::topology(), case_study::parameters()).unwrap();
    let duty = vec![0.6, 0.61, 0.59, 0.605];
    let eq = model.forced_equilibrium(&duty).unwrap();
    let next = integrate_step(&model, &eq, &duty, 1e-5, 0).unwrap();
    for i in 0..4 {
        assert!((next.current[i] - eq.current[i]).abs() <= 1e-10 * eq.current[i].abs());
        assert!((next.voltage[i] - eq.voltage[i]).abs() <= 1e-10 * eq.voltage[i].abs());
    }
}

#[test]
fn frozen_duty_settles_at_the_forced_equilibrium() {
    // The plant is Hurwitz; its slowest mode on the case study decays at
    // roughly 6.6 1/s, so a few seconds suffice from a nearby start.
    let params = case_study::parameters();
    let model = GridModel::new(case_study::topology(), params.clone()).unwrap();
    let duty = vec![230.0 / 380.0; 4];
    let eq = model.forced_equilibrium(&duty).unwrap();
    let mut s = dcgrid::sim::default_initial_state(&params, case_study::INITIAL_CURRENT_FRACTION);
    let dt = 1e-5;
    for k in 0..400_000 {
        s = integrate_step(&model, &s, &duty, dt, k).unwrap();
    }
    let err = relative_distance(&s, &eq);
    assert!(err <= 1e-6, "relative distance {err}");
}

fn relative_distance(a: &GridState, b: &GridState) -> f64 {
    let diff: f64 = a
        .current
        .iter()
        .zip(&b.current)
        .chain(a.voltage.iter().zip(&b.voltage))
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let norm: f64 = b.current.iter().chain(&b.voltage).map(|x| x * x).sum();
    (diff / norm).sqrt()
}

fn short_case_study(duration: f64) -> Scenario {
    Scenario {
        duration,
        events: Vec::new(),
        ..case_study::scenario()
    }
}

#[test]
fn runs_are_bit_identical() {
    let s = short_case_study(0.02);
    let a = run_scenario(&s, &case_study::parameters(), &case_study::topology()).unwrap();
    let b = run_scenario(&s, &case_study::parameters(), &case_study::topology()).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.report, b.report);
}

#[test]
fn mode_flags_latch_at_most_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (topology, params) = common::random_grid(&mut rng, 3);
    // start just below the safe current band so every node has to switch
    let mut initial = common::random_inside_state(&mut rng, &params);
    for (i, p) in params.nodes.iter().enumerate() {
        initial.current[i] = 0.97 * common::joint_band(p).0;
    }
    let scenario = Scenario {
        duration: 0.05,
        dt: 1e-5,
        initial,
        controller: ControllerSpec {
            mode: Mode::Joint,
            gains: (0..3).map(|_| common::random_gains(&mut rng)).collect(),
        },
        events: Vec::new(),
        switch_policy: SwitchPolicy::RelaxedUntilFeasible,
    };
    let out = run_scenario(&scenario, &params, &topology).unwrap();
    for i in 0..3 {
        let flags: Vec<bool> = out.trace.records.iter().map(|r| r.strict[i]).collect();
        let switches = flags.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(switches <= 1);
        assert!(!flags[0] || flags.iter().all(|&f| f));
        if let Some(k) = flags.iter().position(|&f| f) {
            assert!(flags[k..].iter().all(|&f| f), "node {i} switched back");
        }
    }
}

#[test]
fn strict_run_from_inside_keeps_currents_in_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (topology, params) = common::random_grid(&mut rng, 4);
    let initial = common::random_inside_state(&mut rng, &params);
    let gains: Vec<NodeGains> = (0..4).map(|_| common::random_gains(&mut rng)).collect();
    let out = run_scenario(&common::strict_scenario(initial, gains, 0.05), &params, &topology).unwrap();
    for node in &out.report.nodes {
        assert_eq!(node.first_entry, Some(0.0));
        assert!(node.joint_current_violations.iter().all(|v| v.worst <= 1e-3));
    }
    for r in &out.trace.records {
        assert!(r.duty.iter().all(|u| (0.0..=1.0).contains(u)));
        assert!(r.margin_l.iter().chain(&r.margin_h).all(|&m| m >= -1e-6));
    }
}

#[test]
fn load_step_scales_the_plant_only() {
    let s = Scenario {
        duration: 0.1,
        events: vec![dcgrid::sim::LoadEvent { time: 0.05, factor: 1.05 }],
        ..case_study::scenario()
    };
    let params = case_study::parameters();
    let out = run_scenario(&s, &params, &case_study::topology()).unwrap();
    // The current reference (and therefore the current every node settles
    // at) is unaffected by the plant load.
    let last = out.trace.records.last().unwrap();
    for (i, p) in params.nodes.iter().enumerate() {
        let (lo, hi) = common::joint_band(p);
        assert!(last.current[i] >= lo - 1e-3 && last.current[i] <= hi + 1e-3);
    }
}

fn synthetic_record(t: f64, v1: f64) -> TraceRecord {
    let params = case_study::parameters();
    let n = 4;
    TraceRecord {
        t,
        current: params.nodes.iter().map(|p| common::joint_band(p).0 + 0.2).collect(),
        voltage: vec![v1, 230.0, 230.0, 230.0],
        duty: vec![0.6; n],
        eps_l: vec![0.0; n],
        eps_h: vec![0.0; n],
        strict: vec![true; n],
        barriers: Vec::new(),
        margin_l: vec![0.0; n],
        margin_h: vec![0.0; n],
        voltage_violation: vec![false; n],
        current_violation: vec![false; n],
    }
}

#[test]
fn report_finds_a_constructed_voltage_dip() {
    let records = (0..=3000)
        .map(|k| {
            let t = k as f64 * 1e-4;
            let v1 = if (0.1..=0.2).contains(&t) { 228.0 } else { 230.0 };
            synthetic_record(t, v1)
        })
        .collect();
    let report = safety_report(&Trace { records }, &case_study::parameters());
    let node = &report.nodes[0];
    assert_eq!(node.voltage_violations.len(), 1);
    let v = node.voltage_violations[0];
    assert!((v.start - 0.1).abs() <= 1e-4 && (v.end - 0.2).abs() <= 1e-4, "{v:?}");
    assert!((v.worst - 1.0).abs() <= 1e-12);
    for other in &report.nodes[1..] {
        assert!(other.voltage_violations.is_empty());
        assert!(other.current_violations.is_empty());
    }
}

#[test]
fn report_of_a_clean_trace_is_empty() {
    let records = (0..100).map(|k| synthetic_record(k as f64 * 1e-3, 230.0)).collect();
    let report = safety_report(&Trace { records }, &case_study::parameters());
    assert_eq!(report.violation_count(0.0), 0);
    assert!(report.nodes.iter().all(|n| n.first_entry == Some(0.0)));
}
