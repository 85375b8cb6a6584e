//! Decentralized barrier-function controllers.
//!
//! Every DGU picks its own duty ratio from a scalar quadratic program built
//! only from its local measurement `(I_i, V_i)` and its own constants. The
//! current barriers `B_l = I − ref_l`, `B_h = ref_h − I` have relative
//! degree one, and the class-K gain `η/L` turns `dB/dt + (η/L)·B ≥ 0` into a
//! pair of linear constraints on the duty ratio:
//!
//! ```text
//!  a·Vs − V + η_l (I − ref_l) ≥ 0
//! −a·Vs + V − η_h (I − ref_h) ≥ 0
//! ```
//!
//! The current references depend on the [`Mode`]. Since the QP has a single
//! decision variable, both the strict and the slack-relaxed problem are
//! solved in closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::NodeParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("node {node}: joint safe current set is empty (I~_l = {lower} > I~_h = {upper})")]
    EmptyJointSafeSet { node: usize, lower: f64, upper: f64 },
    #[error("duty-ratio constraints are infeasible: [{lower}, {upper}] does not meet [0, 1]")]
    Infeasible { lower: f64, upper: f64 },
    #[error("node {node}: {what} must be positive, got {value}")]
    BadGain {
        node: usize,
        what: &'static str,
        value: f64,
    },
    #[error("expected {expected} per-node gain entries, got {actual}")]
    GainCount { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Load conductance known exactly; references `G·v_l`, `G·v_h`.
    KnownLoad,
    /// Only `[G_l, G_h]` known; references `G_l·v_l`, `G_h·v_h`.
    LoadInterval,
    /// Voltage and source-current bounds together; references `Ĩ_l`, `Ĩ_h`.
    Joint,
    /// Joint references with quadratically penalized slacks.
    Relaxed,
}

impl Mode {
    pub fn is_strict(self) -> bool {
        !matches!(self, Mode::Relaxed)
    }
}

/// What a DGU measures about itself. Nothing else enters a control decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeObservation {
    pub current: f64,
    pub voltage: f64,
}

/// Tuning of one node controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeGains {
    pub eta_l: f64,
    pub eta_h: f64,
    pub p_l: f64,
    pub p_h: f64,
}

impl NodeGains {
    pub fn validate(&self, node: usize) -> Result<(), ControlError> {
        for (what, value) in [
            ("eta_l", self.eta_l),
            ("eta_h", self.eta_h),
            ("p_l", self.p_l),
            ("p_h", self.p_h),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ControlError::BadGain { node, what, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub mode: Mode,
    pub gains: Vec<NodeGains>,
}

impl ControllerSpec {
    pub fn validate(&self, n: usize) -> Result<(), ControlError> {
        if self.gains.len() != n {
            return Err(ControlError::GainCount {
                expected: n,
                actual: self.gains.len(),
            });
        }
        for (i, g) in self.gains.iter().enumerate() {
            g.validate(i)?;
        }
        Ok(())
    }
}

/// `Ĩ_l = max(v_l·G_l, I_l)`, `Ĩ_h = min(v_h·G_h, I_h)`: the current band
/// compatible with both the voltage bounds and the source-current bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCurrentBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EffectiveCurrentBounds {
    /// The raw pair, without checking that it is a proper interval.
    pub fn unchecked(v_l: f64, v_h: f64, g_l: f64, g_h: f64, i_l: f64, i_h: f64) -> Self {
        Self {
            lower: (v_l * g_l).max(i_l),
            upper: (v_h * g_h).min(i_h),
        }
    }

    pub fn new(
        node: usize,
        v_l: f64,
        v_h: f64,
        g_l: f64,
        g_h: f64,
        i_l: f64,
        i_h: f64,
    ) -> Result<Self, ControlError> {
        let bounds = Self::unchecked(v_l, v_h, g_l, g_h, i_l, i_h);
        if bounds.lower > bounds.upper {
            return Err(ControlError::EmptyJointSafeSet {
                node,
                lower: bounds.lower,
                upper: bounds.upper,
            });
        }
        Ok(bounds)
    }

    pub fn for_node(node: usize, p: &NodeParams) -> Result<Self, ControlError> {
        Self::new(node, p.v_min, p.v_max, p.load_min, p.load_max, p.i_min, p.i_max)
    }

    pub fn contains(&self, current: f64) -> bool {
        self.lower <= current && current <= self.upper
    }
}

/// The node-local constants a controller is allowed to know.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLimits {
    pub source_voltage: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Nominal load, used only by [`Mode::KnownLoad`].
    pub load: f64,
    pub load_min: f64,
    pub load_max: f64,
    pub i_min: f64,
    pub i_max: f64,
}

impl From<&NodeParams> for NodeLimits {
    fn from(p: &NodeParams) -> Self {
        Self {
            source_voltage: p.source_voltage,
            v_min: p.v_min,
            v_max: p.v_max,
            load: p.load,
            load_min: p.load_min,
            load_max: p.load_max,
            i_min: p.i_min,
            i_max: p.i_max,
        }
    }
}

impl NodeLimits {
    pub fn effective_current_bounds(&self) -> EffectiveCurrentBounds {
        EffectiveCurrentBounds::unchecked(
            self.v_min,
            self.v_max,
            self.load_min,
            self.load_max,
            self.i_min,
            self.i_max,
        )
    }

    /// Lower and upper current reference used by the barrier of `mode`.
    pub fn current_references(&self, mode: Mode) -> (f64, f64) {
        match mode {
            Mode::KnownLoad => (self.load * self.v_min, self.load * self.v_max),
            Mode::LoadInterval => (self.load_min * self.v_min, self.load_max * self.v_max),
            Mode::Joint | Mode::Relaxed => {
                let b = self.effective_current_bounds();
                (b.lower, b.upper)
            }
        }
    }

    /// Joint safe set membership: `v_l ≤ V ≤ v_h` and `Ĩ_l ≤ I ≤ Ĩ_h`.
    pub fn in_joint_safe_set(&self, obs: NodeObservation) -> bool {
        self.v_min <= obs.voltage
            && obs.voltage <= self.v_max
            && self.effective_current_bounds().contains(obs.current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierValues {
    pub b_l: f64,
    pub b_h: f64,
    pub cap_b_l: f64,
    pub cap_b_h: f64,
}

impl BarrierValues {
    pub fn voltage_safe(&self) -> bool {
        self.b_l >= 0.0 && self.b_h >= 0.0
    }

    pub fn current_safe(&self) -> bool {
        self.cap_b_l >= 0.0 && self.cap_b_h >= 0.0
    }
}

pub fn barrier_values(obs: NodeObservation, limits: &NodeLimits, mode: Mode) -> BarrierValues {
    let (ref_l, ref_h) = limits.current_references(mode);
    BarrierValues {
        b_l: obs.voltage - limits.v_min,
        b_h: limits.v_max - obs.voltage,
        cap_b_l: obs.current - ref_l,
        cap_b_h: ref_h - obs.current,
    }
}

/// Raw duty-ratio interval `[lower, upper]` implied by the two barrier
/// constraints, before intersecting with `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyInterval {
    pub lower: f64,
    pub upper: f64,
}

pub fn constraint_interval(
    obs: NodeObservation,
    limits: &NodeLimits,
    gains: &NodeGains,
    mode: Mode,
) -> DutyInterval {
    let (ref_l, ref_h) = limits.current_references(mode);
    DutyInterval {
        lower: (obs.voltage - gains.eta_l * (obs.current - ref_l)) / limits.source_voltage,
        upper: (obs.voltage - gains.eta_h * (obs.current - ref_h)) / limits.source_voltage,
    }
}

/// Residuals `(g_l, g_h)` of the two barrier constraints at duty ratio `a`.
/// Both are nonnegative exactly when `a` satisfies the constraints.
pub fn constraint_residuals(
    a: f64,
    obs: NodeObservation,
    limits: &NodeLimits,
    gains: &NodeGains,
    mode: Mode,
) -> (f64, f64) {
    let (ref_l, ref_h) = limits.current_references(mode);
    let vs = limits.source_voltage;
    (
        a * vs - obs.voltage + gains.eta_l * (obs.current - ref_l),
        -a * vs + obs.voltage - gains.eta_h * (obs.current - ref_h),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyDecision {
    pub duty: f64,
    pub eps_l: f64,
    pub eps_h: f64,
    pub feasible: bool,
}

/// Minimum-norm duty ratio in `[max(lower, 0), min(upper, 1)]`.
pub fn solve_strict(interval: DutyInterval) -> Result<DutyDecision, ControlError> {
    let lo = interval.lower.max(0.0);
    let hi = interval.upper.min(1.0);
    if interval.lower.is_nan() || interval.upper.is_nan() || lo > hi {
        return Err(ControlError::Infeasible {
            lower: interval.lower,
            upper: interval.upper,
        });
    }
    Ok(DutyDecision {
        duty: lo,
        eps_l: 0.0,
        eps_h: 0.0,
        feasible: true,
    })
}

/// Objective of the slack-relaxed problem after eliminating the slacks:
/// `J(a) = a² + P_l ε_l(a)² + P_h ε_h(a)²` with `ε = max(0, −g(a))`.
#[derive(Debug, Clone, Copy)]
struct RelaxedObjective {
    vs: f64,
    lower: f64,
    upper: f64,
    p_l: f64,
    p_h: f64,
}

impl RelaxedObjective {
    fn slacks(&self, a: f64) -> (f64, f64) {
        (
            (self.vs * (self.lower - a)).max(0.0),
            (self.vs * (a - self.upper)).max(0.0),
        )
    }

    fn value(&self, a: f64) -> f64 {
        let (el, eh) = self.slacks(a);
        a * a + self.p_l * el * el + self.p_h * eh * eh
    }

    /// Stationary point of the quadratic piece on which the lower (resp.
    /// upper) slack is active according to the flags.
    fn stationary(&self, low_active: bool, high_active: bool) -> f64 {
        let k_l = if low_active { self.p_l * self.vs * self.vs } else { 0.0 };
        let k_h = if high_active { self.p_h * self.vs * self.vs } else { 0.0 };
        // With k ~ 1e28 the direct ratio loses nothing: both sums are
        // dominated by the same large term.
        (k_l * self.lower + k_h * self.upper) / (1.0 + k_l + k_h)
    }
}

/// Exact minimizer of the slack-relaxed problem with Joint references.
///
/// `J` is a convex piecewise quadratic on `[0, 1]` with breakpoints where the
/// constraints become tight. The minimizer is among the endpoints, the
/// breakpoints and the clamped stationary points of every piece, so the
/// candidates are enumerated and compared.
pub fn solve_relaxed(obs: NodeObservation, limits: &NodeLimits, gains: &NodeGains) -> DutyDecision {
    let interval = constraint_interval(obs, limits, gains, Mode::Relaxed);
    let objective = RelaxedObjective {
        vs: limits.source_voltage,
        lower: interval.lower,
        upper: interval.upper,
        p_l: gains.p_l,
        p_h: gains.p_h,
    };

    let mut knots = vec![0.0, 1.0];
    for b in [interval.lower, interval.upper] {
        if (0.0..=1.0).contains(&b) {
            knots.push(b);
        }
    }
    knots.sort_by(f64::total_cmp);

    let mut candidates = knots.clone();
    for w in knots.windows(2) {
        let (left, right) = (w[0], w[1]);
        let mid = 0.5 * (left + right);
        let low_active = mid < interval.lower;
        let high_active = mid > interval.upper;
        candidates.push(objective.stationary(low_active, high_active).clamp(left, right));
    }

    let mut best = candidates[0];
    let mut best_value = objective.value(best);
    for &a in &candidates[1..] {
        let v = objective.value(a);
        if v < best_value || (v == best_value && a < best) {
            best = a;
            best_value = v;
        }
    }

    // With large penalties the stationary point of a penalized piece lies
    // within rounding of its breakpoint, and landing one ulp on the violating
    // side costs P·Vs²·ulp² — far more than the a² term. Such points are
    // rounded onto the feasible side instead.
    let (ref_l, ref_h) = limits.current_references(Mode::Relaxed);
    let scale = obs.voltage.abs()
        + limits.source_voltage
        + (gains.eta_l * (obs.current - ref_l)).abs()
        + (gains.eta_h * (obs.current - ref_h)).abs();
    let guard = 8.0 * f64::EPSILON * scale / limits.source_voltage;
    let (el, eh) = objective.slacks(best);
    if eh == 0.0 && (best - interval.lower).abs() < guard {
        let a = interval.lower + guard;
        if a <= interval.upper.min(1.0) {
            best = a;
        }
    } else if el == 0.0 && (best - interval.upper).abs() < guard {
        let a = interval.upper - guard;
        if a >= interval.lower.max(0.0) {
            best = a;
        }
    }

    let (eps_l, eps_h) = objective.slacks(best);
    DutyDecision {
        duty: best,
        eps_l,
        eps_h,
        feasible: eps_l == 0.0 && eps_h == 0.0,
    }
}

/// Value of the slack-relaxed objective at `a`, with the optimal slacks.
pub fn relaxed_objective(
    a: f64,
    obs: NodeObservation,
    limits: &NodeLimits,
    gains: &NodeGains,
) -> f64 {
    let interval = constraint_interval(obs, limits, gains, Mode::Relaxed);
    RelaxedObjective {
        vs: limits.source_voltage,
        lower: interval.lower,
        upper: interval.upper,
        p_l: gains.p_l,
        p_h: gains.p_h,
    }
    .value(a)
}

/// Outcome of a zeroing-barrier condition check `dh/dt + gain·h ≥ −tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorResult {
    pub margin: f64,
    pub pass: bool,
}

pub fn zcbf_monitor(h: f64, h_dot: f64, alpha_gain: f64, tolerance: f64) -> MonitorResult {
    let margin = h_dot + alpha_gain * h;
    MonitorResult {
        margin,
        pass: margin >= -tolerance,
    }
}

/// Controller of a single DGU.
#[derive(Debug, Clone, Copy)]
pub struct NodeController {
    pub limits: NodeLimits,
    pub gains: NodeGains,
    pub mode: Mode,
}

impl NodeController {
    pub fn new(node: usize, params: &NodeParams, gains: NodeGains, mode: Mode) -> Result<Self, ControlError> {
        gains.validate(node)?;
        if matches!(mode, Mode::Joint | Mode::Relaxed) {
            EffectiveCurrentBounds::for_node(node, params)?;
        }
        Ok(Self {
            limits: params.into(),
            gains,
            mode,
        })
    }

    pub fn decide(&self, obs: NodeObservation) -> Result<DutyDecision, ControlError> {
        match self.mode {
            Mode::Relaxed => Ok(solve_relaxed(obs, &self.limits, &self.gains)),
            mode => solve_strict(constraint_interval(obs, &self.limits, &self.gains, mode)),
        }
    }

    pub fn barriers(&self, obs: NodeObservation) -> BarrierValues {
        barrier_values(obs, &self.limits, self.mode)
    }
}
