//! Post-run safety analysis of a trace against the voltage and current bounds.

use serde::{Deserialize, Serialize};

use crate::controller::EffectiveCurrentBounds;
use crate::grid::GridParameters;
use crate::sim::Trace;

/// Time span during which a bound was violated. `worst` is the largest
/// excursion beyond the bound (V or A).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationInterval {
    pub start: f64,
    pub end: f64,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSafety {
    pub node: usize,
    pub voltage_min: f64,
    pub voltage_max: f64,
    pub current_min: f64,
    pub current_max: f64,
    /// Excursions outside `[v_l, v_h]`.
    pub voltage_violations: Vec<ViolationInterval>,
    /// Excursions outside `[I_l, I_h]`.
    pub current_violations: Vec<ViolationInterval>,
    /// Excursions outside `[Ĩ_l, Ĩ_h]`.
    pub joint_current_violations: Vec<ViolationInterval>,
    /// First sample time at which the node was inside its joint safe set.
    pub first_entry: Option<f64>,
}

impl NodeSafety {
    /// Voltage and joint-current violations that begin at or after the
    /// first entry into the joint safe set and exceed `tolerance`.
    pub fn post_entry_violations(&self, tolerance: f64) -> Vec<ViolationInterval> {
        let Some(entry) = self.first_entry else {
            return Vec::new();
        };
        self.voltage_violations
            .iter()
            .chain(&self.joint_current_violations)
            .filter(|v| v.start >= entry && v.worst > tolerance)
            .copied()
            .collect()
    }

    /// Entered the joint safe set and never left it by more than `tolerance`.
    pub fn safe_after_entry(&self, tolerance: f64) -> bool {
        self.first_entry.is_some() && self.post_entry_violations(tolerance).is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub nodes: Vec<NodeSafety>,
}

impl SafetyReport {
    pub fn safe_after_entry(&self, tolerance: f64) -> bool {
        self.nodes.iter().all(|n| n.safe_after_entry(tolerance))
    }

    pub fn violation_count(&self, tolerance: f64) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.voltage_violations
                    .iter()
                    .chain(&n.current_violations)
                    .chain(&n.joint_current_violations)
            })
            .filter(|v| v.worst > tolerance)
            .count()
    }
}

/// Finds the spans where `margin < 0`. Crossing times are interpolated
/// linearly between samples; a span open at either end of the record is
/// clipped to the first or last sample time.
pub fn violation_intervals(times: &[f64], margin: &[f64]) -> Vec<ViolationInterval> {
    debug_assert_eq!(times.len(), margin.len());
    let crossing = |k: usize| {
        let (m0, m1) = (margin[k - 1], margin[k]);
        let s = m0 / (m0 - m1);
        times[k - 1] + s * (times[k] - times[k - 1])
    };

    let mut out = Vec::new();
    let mut open: Option<ViolationInterval> = None;
    for k in 0..times.len() {
        let m = margin[k];
        match (&mut open, m < 0.0) {
            (None, true) => {
                let start = if k == 0 { times[0] } else { crossing(k) };
                open = Some(ViolationInterval {
                    start,
                    end: start,
                    worst: -m,
                });
            }
            (Some(v), true) => v.worst = v.worst.max(-m),
            (Some(v), false) => {
                v.end = crossing(k);
                out.push(*v);
                open = None;
            }
            (None, false) => {}
        }
    }
    if let Some(mut v) = open {
        v.end = *times.last().unwrap();
        out.push(v);
    }
    out
}

pub fn safety_report(trace: &Trace, params: &GridParameters) -> SafetyReport {
    let times: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let nodes = params
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let current: Vec<f64> = trace.records.iter().map(|r| r.current[i]).collect();
            let voltage: Vec<f64> = trace.records.iter().map(|r| r.voltage[i]).collect();
            let joint = EffectiveCurrentBounds::unchecked(
                p.v_min, p.v_max, p.load_min, p.load_max, p.i_min, p.i_max,
            );

            let band = |x: &[f64], lo: f64, hi: f64| -> Vec<f64> {
                x.iter().map(|&x| (x - lo).min(hi - x)).collect()
            };
            let v_margin = band(&voltage, p.v_min, p.v_max);
            let i_margin = band(&current, p.i_min, p.i_max);
            let joint_margin = band(&current, joint.lower, joint.upper);

            let first_entry = (0..times.len())
                .find(|&k| v_margin[k] >= 0.0 && joint_margin[k] >= 0.0)
                .map(|k| times[k]);

            let fold = |x: &[f64]| {
                x.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            };
            let (voltage_min, voltage_max) = fold(&voltage);
            let (current_min, current_max) = fold(&current);

            NodeSafety {
                node: i,
                voltage_min,
                voltage_max,
                current_min,
                current_max,
                voltage_violations: violation_intervals(&times, &v_margin),
                current_violations: violation_intervals(&times, &i_margin),
                joint_current_violations: violation_intervals(&times, &joint_margin),
                first_entry,
            }
        })
        .collect();
    SafetyReport { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_violation() {
        let t = [0.0, 1.0, 2.0];
        assert!(violation_intervals(&t, &[1.0, 0.0, 2.0]).is_empty());
    }

    #[test]
    fn interpolated_crossings() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = violation_intervals(&t, &[1.0, -1.0, -3.0, 1.0]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].start, 0.5);
        assert_eq!(v[0].end, 2.75);
        assert_eq!(v[0].worst, 3.0);
    }

    #[test]
    fn open_ended_spans_are_clipped() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = violation_intervals(&t, &[-1.0, 1.0, 1.0, 1.0, -2.0]);
        assert_eq!(v.len(), 2);
        assert_eq!((v[0].start, v[0].end), (0.0, 0.5));
        assert_eq!((v[1].start, v[1].end), (3.0 + 1.0 / 3.0, 4.0));
        assert!(v[0].end < v[1].start);
    }
}
