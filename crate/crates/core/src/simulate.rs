//! Initial value problems for the delayed system.
//!
//! The delays are carried as extra states with `dτ/dt = 1 - v(now)/v(delayed)`
//! and integrated together with `(M, I, E)` by an embedded Dormand–Prince
//! 5(4) pair. Past values come from cubic Hermite interpolation of the
//! stored mesh. Threshold fidelity is checked afterwards by quadrature.

use serde::Serialize;
use thiserror::Error;

use crate::error::{OperonError, Result};
use crate::model::{rhs, DelayedArguments, OperonParameters, StateVector, Validation};
use crate::quadrature;
use crate::threshold::{delay_exact, ThresholdSpec};

/// Dense record of a solution: mesh times, states and derivatives, with
/// cubic Hermite interpolation between mesh points.
///
/// Two consecutive records may share a time: the left one closes the
/// initial history and the right one opens the computed solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistorySegment {
    pub t: Vec<f64>,
    pub x: Vec<StateVector>,
    pub dx: Vec<StateVector>,
}

fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

fn hermite_slope(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    ((6.0 * s2 - 6.0 * s) * y0 + (6.0 * s - 6.0 * s2) * y1) / h
        + (3.0 * s2 - 4.0 * s + 1.0) * d0
        + (3.0 * s2 - 2.0 * s) * d1
}

fn map3(a: StateVector, b: StateVector, f: impl Fn(f64, f64) -> f64) -> StateVector {
    StateVector::new(f(a.m, b.m), f(a.i, b.i), f(a.e, b.e))
}

impl HistorySegment {
    /// Constant history `x` on `[t0 - window, t0]`.
    pub fn constant(x: StateVector, t0: f64, window: f64) -> Self {
        let zero = StateVector::default();
        Self {
            t: vec![t0 - window, t0],
            x: vec![x, x],
            dx: vec![zero, zero],
        }
    }

    /// History through the given samples; derivatives by finite differences.
    pub fn from_samples(t: Vec<f64>, x: Vec<StateVector>) -> Result<Self> {
        if t.len() < 2 || t.len() != x.len() {
            return Err(OperonError::Validation(
                "history needs at least two (t, state) samples".into(),
            ));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OperonError::Validation(
                "history times must be strictly increasing".into(),
            ));
        }
        let n = t.len();
        let dx = (0..n)
            .map(|k| {
                let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
                let dt = t[b] - t[a];
                map3(x[b], x[a], |p, q| (p - q) / dt)
            })
            .collect();
        Ok(Self { t, x, dx })
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_state(&self) -> StateVector {
        *self.x.last().unwrap()
    }

    pub fn push(&mut self, t: f64, x: StateVector, dx: StateVector) {
        self.t.push(t);
        self.x.push(x);
        self.dx.push(dx);
    }

    /// Index `k` of the mesh interval `[t_k, t_{k+1}]` holding `t`.
    fn interval(&self, t: f64) -> Result<usize> {
        let (lo, hi) = (self.start(), self.end());
        let slack = 1e-12 * (1.0 + hi.abs());
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(OperonError::Horizon(format!(
                "lookup at t = {t} outside stored [{lo}, {hi}]"
            )));
        }
        let idx = self.t.partition_point(|&s| s <= t);
        Ok(idx.clamp(1, self.t.len() - 1) - 1)
    }

    pub fn eval(&self, t: f64) -> Result<StateVector> {
        let k = self.interval(t)?;
        Ok(self.eval_in(k, t))
    }

    fn eval_in(&self, k: usize, t: f64) -> StateVector {
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let (a, b, da, db) = (self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]);
        StateVector::new(
            hermite(t0, t1, a.m, b.m, da.m, db.m, t),
            hermite(t0, t1, a.i, b.i, da.i, db.i, t),
            hermite(t0, t1, a.e, b.e, da.e, db.e, t),
        )
    }

    fn slope_in(&self, k: usize, t: f64) -> StateVector {
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let (a, b, da, db) = (self.x[k], self.x[k + 1], self.dx[k], self.dx[k + 1]);
        StateVector::new(
            hermite_slope(t0, t1, a.m, b.m, da.m, db.m, t),
            hermite_slope(t0, t1, a.i, b.i, da.i, db.i, t),
            hermite_slope(t0, t1, a.e, b.e, da.e, db.e, t),
        )
    }

    /// Copy of the records covering `[from, end]`.
    pub fn tail(&self, from: f64) -> Result<Self> {
        let k = self.interval(from)?;
        let mut out = Self {
            t: vec![from],
            x: vec![self.eval_in(k, from)],
            dx: vec![self.slope_in(k, from)],
        };
        for j in k + 1..self.t.len() {
            if self.t[j] > from {
                out.push(self.t[j], self.x[j], self.dx[j]);
            }
        }
        if out.len() < 2 {
            return Err(OperonError::Horizon(format!(
                "tail from {from} leaves fewer than two records"
            )));
        }
        Ok(out)
    }

    /// `∫_a^b g(x(s)) ds`, one G7/K15 panel per mesh interval.
    pub fn integrate<G: Fn(StateVector) -> f64>(&self, a: f64, b: f64, g: G) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let mut k = self.interval(a)?;
        let mut total = 0.0;
        let mut lo = a;
        loop {
            let hi = self.t[k + 1].min(b);
            if hi > lo {
                let f = |s: f64| g(self.eval_in(k, s));
                total += quadrature::gk15(&f, lo, hi).0;
            }
            if hi >= b || k + 2 >= self.t.len() {
                break;
            }
            lo = hi;
            k += 1;
        }
        Ok(total)
    }
}

/// Delay values and rates at the mesh points of the computed solution.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DelayTrace {
    pub t: Vec<f64>,
    pub tau_m: Vec<f64>,
    pub tau_i: Vec<f64>,
    pub rate_m: Vec<f64>,
    pub rate_i: Vec<f64>,
}

impl DelayTrace {
    /// Interpolated `(τ_M, τ_I)` at `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let n = self.t.len();
        let idx = self.t.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let (t0, t1) = (self.t[idx], self.t[idx + 1]);
        (
            hermite(
                t0,
                t1,
                self.tau_m[idx],
                self.tau_m[idx + 1],
                self.rate_m[idx],
                self.rate_m[idx + 1],
                t,
            ),
            hermite(
                t0,
                t1,
                self.tau_i[idx],
                self.tau_i[idx + 1],
                self.rate_i[idx],
                self.rate_i[idx + 1],
                t,
            ),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectReport {
    /// `max |∫_{t-τ_M}^t v_M(E) ds - a_M|` over the checkpoints.
    pub transcription: f64,
    /// Same for the translation delay (0 when that delay is constant).
    pub translation: f64,
    pub checkpoints: usize,
}

impl DefectReport {
    pub fn max(&self) -> f64 {
        self.transcription.max(self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_step: f64,
    /// Nominal first step; the first ten steps are held to 1e-3 of it.
    pub initial_step: f64,
    /// Disables error control and steps with this size.
    pub fixed_step: Option<f64>,
    pub defect_checkpoints: usize,
    pub max_steps: usize,
    /// Every this many accepted steps the delays are pulled back onto the
    /// threshold condition; `None` integrates the delay law unaided.
    pub projection_interval: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            atol: 1e-9,
            rtol: 1e-7,
            max_step: 0.05,
            initial_step: 0.05,
            fixed_step: None,
            defect_checkpoints: 100,
            max_steps: 20_000_000,
            projection_interval: Some(50),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub params: OperonParameters,
    /// Start of the computed part; earlier records are the initial history.
    pub t0: f64,
    pub trajectory: HistorySegment,
    pub delays: DelayTrace,
    pub defect: DefectReport,
    /// Smallest state component seen on the computed part.
    pub min_component: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl SimulationResult {
    pub fn t_end(&self) -> f64 {
        self.trajectory.end()
    }

    pub fn final_state(&self) -> StateVector {
        self.trajectory.last_state()
    }

    /// Trailing window of the solution, usable as a history.
    pub fn tail(&self, window: f64) -> Result<HistorySegment> {
        self.trajectory.tail(self.t_end() - window)
    }
}

/// History window needed for `params`: the longest admissible delay.
pub fn required_window(params: &OperonParameters) -> f64 {
    let tm = params.a_m / params.transcription_velocity().min();
    let ti = params.a_i / params.translation_velocity().min();
    tm.max(ti)
}

/// Delays `(τ_M(t0), τ_I(t0))` solving the threshold conditions on `history`.
pub fn initial_delay(params: &OperonParameters, history: &HistorySegment) -> Result<(f64, f64)> {
    let t0 = history.end();
    let sm = ThresholdSpec::transcription(params)?;
    let si = ThresholdSpec::translation(params)?;
    if history.len() == 2 && history.x[0] == history.x[1] && history.dx[0] == StateVector::default()
    {
        let x = history.x[0];
        return Ok((sm.a / sm.velocity(x.e), si.a / si.velocity(x.m)));
    }
    let e_of = |s: f64| history.eval(s).map(|x| x.e).unwrap_or(f64::NAN);
    let m_of = |s: f64| history.eval(s).map(|x| x.m).unwrap_or(f64::NAN);
    let tau_m = delay_exact(&sm, &e_of, t0, history.span())?;
    let tau_i = delay_exact(&si, &m_of, t0, history.span())?;
    Ok((tau_m, tau_i))
}

type Aug = [f64; 5];

fn aug(x: StateVector, tau_m: f64, tau_i: f64) -> Aug {
    [x.m, x.i, x.e, tau_m, tau_i]
}

fn state_of(y: &Aug) -> StateVector {
    StateVector::new(y[0], y[1], y[2])
}

/// Right-hand side of the augmented system at time `t`.
fn augmented_rhs(
    params: &OperonParameters,
    history: &HistorySegment,
    t: f64,
    y: &Aug,
) -> Result<Aug> {
    let now = state_of(y);
    let (tau_m, tau_i) = (y[3], y[4]);
    let e_delayed = history.eval(t - tau_m)?.e;
    let m_delayed = history.eval(t - tau_i)?.m;
    let d = rhs(
        params,
        now,
        DelayedArguments {
            tau_m,
            tau_i,
            e_delayed,
            m_delayed,
        },
    )?;
    let vm = params.transcription_velocity();
    let vi = params.translation_velocity();
    let rate_m = if vm.is_constant() {
        0.0
    } else {
        1.0 - vm.value(now.e.max(0.0)) / vm.value(e_delayed.max(0.0))
    };
    let rate_i = if vi.is_constant() {
        0.0
    } else {
        1.0 - vi.value(now.m.max(0.0)) / vi.value(m_delayed.max(0.0))
    };
    Ok([d.m, d.i, d.e, rate_m, rate_i])
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus the embedded fourth-order ones
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepOutcome {
    y: Aug,
    dy: Aug,
    err: Aug,
}

/// One Dormand–Prince step. The caller guarantees `h` is below a quarter of
/// both delays, so every delayed lookup falls before `t`.
fn dp_step(
    params: &OperonParameters,
    history: &HistorySegment,
    t: f64,
    y: &Aug,
    dy: &Aug,
    h: f64,
) -> Result<StepOutcome> {
    let mut k = [[0.0; 5]; 7];
    k[0] = *dy;
    for s in 1..7 {
        let mut ys = *y;
        for j in 0..s {
            for c in 0..5 {
                ys[c] += h * A[s][j] * k[j][c];
            }
        }
        k[s] = augmented_rhs(params, history, t + C[s] * h, &ys)?;
    }
    let mut y_new = *y;
    for j in 0..6 {
        for c in 0..5 {
            y_new[c] += h * A[6][j] * k[j][c];
        }
    }
    let mut err = [0.0; 5];
    for j in 0..7 {
        for c in 0..5 {
            err[c] += h * E[j] * k[j][c];
        }
    }
    Ok(StepOutcome {
        y: y_new,
        dy: k[6],
        err,
    })
}

/// Integrates from the end of `history` to `t_end`.
pub fn simulate(
    params: &OperonParameters,
    history: &HistorySegment,
    t_end: f64,
    options: &SimulationOptions,
) -> Result<SimulationResult> {
    params.validate(Validation::Strict)?;
    let window = required_window(params);
    if history.span() < window * (1.0 - 1e-12) {
        return Err(OperonError::Horizon(format!(
            "history covers {} but the longest admissible delay is {window}",
            history.span()
        )));
    }
    let t0 = history.end();
    if !(t_end > t0) {
        return Err(OperonError::Validation(format!(
            "t_end = {t_end} must exceed the history end {t0}"
        )));
    }
    let (tau_m0, tau_i0) = initial_delay(params, history)?;
    let mut traj = history.clone();
    let mut t = t0;
    let mut y = aug(history.last_state(), tau_m0, tau_i0);
    // the right record at t0 carries the solution's own derivative
    let mut dy = augmented_rhs(params, &traj, t, &y)?;
    traj.push(t, state_of(&y), state_of(&dy));
    let mut delays = DelayTrace::default();
    let record = |d: &mut DelayTrace, t: f64, y: &Aug, dy: &Aug| {
        d.t.push(t);
        d.tau_m.push(y[3]);
        d.tau_i.push(y[4]);
        d.rate_m.push(dy[3]);
        d.rate_i.push(dy[4]);
    };
    record(&mut delays, t, &y, &dy);

    let nominal = options
        .initial_step
        .min(0.25 * tau_m0.min(tau_i0))
        .min(options.max_step);
    let mut h = options.fixed_step.unwrap_or(1e-3 * nominal);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut min_component = f64::INFINITY;
    while t < t_end {
        if accepted + rejected >= options.max_steps {
            return Err(OperonError::BlowUp {
                t,
                reason: "step budget exhausted".into(),
            });
        }
        let cap = 0.25 * y[3].min(y[4]);
        let mut step = h.min(cap).min(options.max_step);
        if options.fixed_step.is_none() && accepted < 10 {
            step = step.min(1e-3 * nominal);
        }
        // absorb a rounding-sized remainder into this step
        let last = t_end - (t + step) <= 1e-9 * step;
        if last {
            step = t_end - t;
        }
        if step <= 1e-14 * (1.0 + t.abs()) {
            return Err(OperonError::BlowUp {
                t,
                reason: format!("step size underflow ({step})"),
            });
        }
        let out = dp_step(params, &traj, t, &y, &dy, step)?;
        if !out.y.iter().all(|v| v.is_finite()) {
            return Err(OperonError::BlowUp {
                t,
                reason: "non-finite state".into(),
            });
        }
        let factor = if options.fixed_step.is_some() {
            None
        } else {
            let norm = (0..5)
                .map(|c| {
                    (out.err[c] / (options.atol + options.rtol * y[c].abs().max(out.y[c].abs())))
                        .abs()
                })
                .fold(0.0f64, f64::max);
            Some(norm)
        };
        match factor {
            Some(norm) if norm > 1.0 => {
                rejected += 1;
                h = step * (0.9 * norm.powf(-0.2)).max(0.2);
                continue;
            }
            Some(norm) => {
                let grow = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h = step * grow;
                }
            }
            None => {}
        }
        t = if last { t_end } else { t + step };
        y = out.y;
        dy = out.dy;
        accepted += 1;
        if options
            .projection_interval
            .is_some_and(|k| accepted % k.max(1) == 0)
        {
            // the trajectory must include the new point for the quadrature
            traj.push(t, state_of(&y), state_of(&dy));
            let moved = project_delays(params, &traj, t, &mut y)?;
            traj.t.pop();
            traj.x.pop();
            traj.dx.pop();
            if moved {
                dy = augmented_rhs(params, &traj, t, &y)?;
            }
        }
        min_component = min_component.min(y[0]).min(y[1]).min(y[2]);
        traj.push(t, state_of(&y), state_of(&dy));
        record(&mut delays, t, &y, &dy);
    }
    let defect = threshold_defect(params, &traj, &delays, options.defect_checkpoints)?;
    Ok(SimulationResult {
        params: params.clone(),
        t0,
        trajectory: traj,
        delays,
        defect,
        min_component,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

/// One Newton step of each threshold condition at `t`, using the dense
/// solution; removes the slow drift of the integrated delay law.
fn project_delays(
    params: &OperonParameters,
    traj: &HistorySegment,
    t: f64,
    y: &mut Aug,
) -> Result<bool> {
    let mut moved = false;
    let vm = params.transcription_velocity();
    if !vm.is_constant() {
        let j = traj.integrate(t - y[3], t, |x| vm.value(x.e.max(0.0)))?;
        let v = vm.value(traj.eval(t - y[3])?.e.max(0.0));
        y[3] -= (j - params.a_m) / v;
        moved = true;
    }
    let vi = params.translation_velocity();
    if !vi.is_constant() {
        let j = traj.integrate(t - y[4], t, |x| vi.value(x.m.max(0.0)))?;
        let v = vi.value(traj.eval(t - y[4])?.m.max(0.0));
        y[4] -= (j - params.a_i) / v;
        moved = true;
    }
    Ok(moved)
}

/// Post-hoc check of the threshold conditions along a computed trajectory.
pub fn threshold_defect(
    params: &OperonParameters,
    traj: &HistorySegment,
    delays: &DelayTrace,
    checkpoints: usize,
) -> Result<DefectReport> {
    let (t0, t1) = (delays.t[0], *delays.t.last().unwrap());
    let vm = params.transcription_velocity();
    let vi = params.translation_velocity();
    let n = checkpoints.max(1);
    let mut report = DefectReport {
        transcription: 0.0,
        translation: 0.0,
        checkpoints: n,
    };
    for k in 1..=n {
        let t = t0 + (t1 - t0) * k as f64 / n as f64;
        let (tau_m, tau_i) = delays.at(t);
        if !vm.is_constant() {
            let integral = traj.integrate(t - tau_m, t, |x| vm.value(x.e.max(0.0)))?;
            report.transcription = report.transcription.max((integral - params.a_m).abs());
        }
        if !vi.is_constant() {
            let integral = traj.integrate(t - tau_i, t, |x| vi.value(x.m.max(0.0)))?;
            report.translation = report.translation.max((integral - params.a_i).abs());
        }
    }
    Ok(report)
}

/// State component used for Poincaré sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Component {
    M,
    I,
    E,
}

impl Component {
    pub fn of(&self, x: StateVector) -> f64 {
        match self {
            Component::M => x.m,
            Component::I => x.i,
            Component::E => x.e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub component: Component,
    /// Section level; defaults to the midpoint of the observed range.
    pub level: Option<f64>,
    /// Count upward crossings when true, downward otherwise.
    pub upward: bool,
}

impl Default for Section {
    fn default() -> Self {
        Self {
            component: Component::E,
            level: None,
            upward: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub section: Section,
    /// Time discarded from the start of the computed part.
    pub transient: f64,
    /// Relative agreement required between successive returns.
    pub tolerance: f64,
    /// Number of successive return maps that must agree.
    pub returns: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            section: Section::default(),
            transient: 0.0,
            tolerance: 1e-6,
            returns: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrbitFailure {
    #[error("no periodic behavior: {0}")]
    NotPeriodic(String),
    #[error("returns have not converged (relative spread {spread:e})")]
    NotConverged { spread: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitDescriptor {
    pub period: f64,
    pub max: StateVector,
    pub min: StateVector,
    /// `(1/T) ∫_0^T E(t) dt`
    pub one_norm: f64,
    /// Largest relative difference between the compared return points.
    pub return_error: f64,
    /// Section crossing time that closes the reported period.
    pub section_time: f64,
}

/// Section crossings after `from`: times and augmented states `(M, I, E, τ_M, τ_I)`.
pub fn section_crossings(
    result: &SimulationResult,
    section: &Section,
    level: f64,
    from: f64,
) -> Vec<(f64, Aug)> {
    let traj = &result.trajectory;
    let comp = section.component;
    let start = traj.t.partition_point(|&s| s < from.max(result.t0));
    let mut out = Vec::new();
    for k in start.max(1)..traj.len() - 1 {
        let (ta, tb) = (traj.t[k], traj.t[k + 1]);
        if tb <= ta {
            continue;
        }
        let (ga, gb) = (comp.of(traj.x[k]) - level, comp.of(traj.x[k + 1]) - level);
        let hit = if section.upward {
            ga < 0.0 && gb >= 0.0
        } else {
            ga > 0.0 && gb <= 0.0
        };
        if !hit {
            continue;
        }
        let (mut lo, mut hi) = (ta, tb);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let g = comp.of(traj.eval_in(k, mid)) - level;
            if (g < 0.0) == (ga < 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + hi.abs()) {
                break;
            }
        }
        let tc = 0.5 * (lo + hi);
        let (tau_m, tau_i) = result.delays.at(tc);
        out.push((tc, aug(traj.eval_in(k, tc), tau_m, tau_i)));
    }
    out
}

/// Periodic-orbit descriptor from the post-transient part of `result`.
pub fn extract_orbit(
    result: &SimulationResult,
    options: &OrbitOptions,
) -> std::result::Result<OrbitDescriptor, OrbitFailure> {
    let traj = &result.trajectory;
    let from = result.t0 + options.transient;
    if from >= result.t_end() {
        return Err(OrbitFailure::NotPeriodic(
            "transient covers the whole run".into(),
        ));
    }
    let comp = options.section.component;
    let start = traj.t.partition_point(|&s| s < from);
    let (lo, hi) = traj.x[start..]
        .iter()
        .map(|x| comp.of(*x))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !(hi - lo > 1e-8 * (1.0 + hi.abs())) {
        return Err(OrbitFailure::NotPeriodic(format!(
            "component range {lo}..{hi} is flat"
        )));
    }
    let level = options.section.level.unwrap_or(0.5 * (lo + hi));
    let crossings = section_crossings(result, &options.section, level, from);
    let need = options.returns.max(1) + 1;
    if crossings.len() < need {
        return Err(OrbitFailure::NotPeriodic(format!(
            "{} section crossings, need {need}",
            crossings.len()
        )));
    }
    let tail = &crossings[crossings.len() - need..];
    let mut spread = 0.0f64;
    for w in tail.windows(2) {
        let scale = 1.0 + w[0].1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = (0..5).fold(0.0f64, |a, c| a.max((w[1].1[c] - w[0].1[c]).abs()));
        spread = spread.max(diff / scale);
    }
    // return times must agree too
    let periods: Vec<f64> = tail.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let period = periods.iter().sum::<f64>() / periods.len() as f64;
    let period_spread = periods
        .iter()
        .fold(0.0f64, |a, p| a.max((p - period).abs()))
        / period;
    spread = spread.max(period_spread);
    if spread > options.tolerance {
        return Err(OrbitFailure::NotConverged { spread });
    }
    let t_close = tail[need - 1].0;
    let t_open = tail[need - 2].0;
    let mut max = StateVector::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut min = StateVector::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let k0 = traj.t.partition_point(|&s| s <= t_open).saturating_sub(1);
    let k1 = traj.t.partition_point(|&s| s < t_close);
    for k in k0..k1.min(traj.len() - 1) {
        let (a, b) = (traj.t[k].max(t_open), traj.t[k + 1].min(t_close));
        for j in 0..=4 {
            let x = traj.eval_in(k, a + (b - a) * j as f64 / 4.0);
            max = map3(max, x, f64::max);
            min = map3(min, x, f64::min);
        }
    }
    let integral = traj.integrate(t_open, t_close, |x| x.e).unwrap_or(f64::NAN);
    Ok(OrbitDescriptor {
        period,
        max,
        min,
        one_norm: integral / (t_close - t_open),
        return_error: spread,
        section_time: t_close,
    })
}

/// Controls for simulation-based orbit continuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSweepOptions {
    /// Simulated time per parameter value.
    pub duration: f64,
    pub orbit: OrbitOptions,
    pub simulation: SimulationOptions,
}

impl Default for OrbitSweepOptions {
    fn default() -> Self {
        Self {
            duration: 400.0,
            orbit: OrbitOptions {
                transient: 200.0,
                ..OrbitOptions::default()
            },
            simulation: SimulationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSweepPoint {
    pub value: f64,
    pub orbit: OrbitDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSweep {
    pub points: Vec<OrbitSweepPoint>,
    /// `(last value with an orbit, first value without)` when the orbit was lost.
    pub lost: Option<(f64, f64)>,
}

fn run_at(
    params: &OperonParameters,
    previous: &SimulationResult,
    options: &OrbitSweepOptions,
) -> Result<(
    SimulationResult,
    std::result::Result<OrbitDescriptor, OrbitFailure>,
)> {
    let window = required_window(params).max(required_window(&previous.params)) * 1.01;
    let history = previous.tail(window.min(previous.trajectory.span()))?;
    let t_end = history.end() + options.duration;
    let res = simulate(params, &history, t_end, &options.simulation)?;
    let orbit = extract_orbit(&res, &options.orbit);
    Ok((res, orbit))
}

/// Follows a stable orbit through `values` of `param_name`, each run
/// starting from the tail of the previous one with delays recomputed for
/// the new parameters. A failed extraction is retried at half and then a
/// quarter of the parameter step; if both fail the orbit is reported lost.
pub fn continue_orbit(
    params: &OperonParameters,
    seed: &SimulationResult,
    param_name: &str,
    values: &[f64],
    options: &OrbitSweepOptions,
) -> Result<OrbitSweep> {
    let mut current = seed.clone();
    let mut last_value = params.get(param_name)?;
    let mut sweep = OrbitSweep {
        points: Vec::new(),
        lost: None,
    };
    for &target in values {
        let mut value = target;
        let mut failures = 0;
        loop {
            let p = params.with(param_name, value)?;
            let (res, orbit) = match run_at(&p, &current, options) {
                Ok(r) => r,
                Err(OperonError::BlowUp { .. }) => {
                    sweep.lost = Some((last_value, value));
                    return Ok(sweep);
                }
                Err(e) => return Err(e),
            };
            match orbit {
                Ok(orbit) => {
                    sweep.points.push(OrbitSweepPoint { value, orbit });
                    current = res;
                    last_value = value;
                    if value == target {
                        break;
                    }
                    value = target;
                    failures = 0;
                }
                Err(_) => {
                    failures += 1;
                    if failures > 2 {
                        sweep.lost = Some((last_value, value));
                        return Ok(sweep);
                    }
                    value = last_value + 0.5 * (value - last_value);
                }
            }
        }
    }
    Ok(sweep)
}
