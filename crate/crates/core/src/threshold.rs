//! State-dependent delays defined by the threshold condition
//! `∫_{t-τ}^{t} v(x(s)) ds = a`.
//!
//! Histories are closures of absolute time, valid on `[t - r, t]`.

use crate::error::{OperonError, Result};
use crate::model::{HillVelocity, OperonParameters};
use crate::quadrature;

/// Default number of dummy-delay subintervals per velocity regime.
pub const DEFAULT_GRID_N: usize = 48;

/// A threshold length together with the velocity law integrated against it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    pub a: f64,
    pub law: HillVelocity,
}

impl ThresholdSpec {
    pub fn new(a: f64, law: HillVelocity) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(OperonError::Validation(format!(
                "threshold length must be > 0, got {a}"
            )));
        }
        if !(law.min() > 0.0) {
            return Err(OperonError::Validation(format!(
                "threshold velocity must stay positive, minimum is {}",
                law.min()
            )));
        }
        Ok(Self { a, law })
    }

    /// Transcription threshold: `aM` against `v_M(E)`.
    pub fn transcription(params: &OperonParameters) -> Result<Self> {
        Self::new(params.a_m, params.transcription_velocity())
    }

    /// Translation threshold: `aI` against `v_I(M)`.
    pub fn translation(params: &OperonParameters) -> Result<Self> {
        Self::new(params.a_i, params.translation_velocity())
    }

    pub fn v_min(&self) -> f64 {
        self.law.min()
    }

    pub fn v_max(&self) -> f64 {
        self.law.max()
    }

    /// Shortest admissible delay, `a / v_max`.
    pub fn tau_min(&self) -> f64 {
        self.a / self.v_max()
    }

    /// Longest admissible delay, `a / v_min`.
    pub fn tau_max(&self) -> f64 {
        self.a / self.v_min()
    }

    pub fn velocity(&self, x: f64) -> f64 {
        self.law.value(x.max(0.0))
    }
}

/// Solves the threshold condition at time `t` by adaptive quadrature and a
/// safeguarded Newton iteration on the monotone map `τ ↦ ∫_{t-τ}^t v`.
///
/// `horizon` is the length of the window on which `history` may be evaluated.
pub fn delay_exact<H: Fn(f64) -> f64>(
    spec: &ThresholdSpec,
    history: &H,
    t: f64,
    horizon: f64,
) -> Result<f64> {
    let a = spec.a;
    let v = |s: f64| spec.velocity(history(s));
    if spec.law.is_constant() {
        return Ok(a / spec.law.at_zero);
    }
    let quad_tol = 1e-14 * a;
    let mut lo = spec.tau_min();
    let mut hi = spec.tau_max().min(horizon);
    if hi < lo {
        return Err(OperonError::Horizon(format!(
            "window {horizon} shorter than the minimal delay {lo}"
        )));
    }
    let f_lo = quadrature::integrate(&v, t - lo, t, quad_tol);
    let f_hi = f_lo + quadrature::integrate(&v, t - hi, t - lo, quad_tol);
    if f_hi < a * (1.0 - 1e-12) {
        return Err(OperonError::Horizon(format!(
            "integral over the full window of length {hi} is {f_hi} < a = {a}"
        )));
    }
    if f_lo >= a {
        return Ok(lo);
    }
    let (mut g_lo, mut g_hi) = (f_lo - a, f_hi - a);
    // current iterate and its integral
    let mut tau = (a / v(t)).clamp(lo, hi);
    let mut f_tau = f_lo + quadrature::integrate(&v, t - tau, t - lo, quad_tol);
    for _ in 0..200 {
        let g = f_tau - a;
        if g.abs() <= 1e-13 * a {
            return Ok(tau);
        }
        if g < 0.0 {
            lo = tau;
            g_lo = g;
        } else {
            hi = tau;
            g_hi = g;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let slope = v(t - tau);
        let mut next = tau - g / slope;
        if !(next > lo && next < hi) {
            // secant on the bracket, then plain bisection as a last resort
            next = lo - g_lo * (hi - lo) / (g_hi - g_lo);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
        }
        f_tau += if next > tau {
            quadrature::integrate(&v, t - next, t - tau, quad_tol)
        } else {
            -quadrature::integrate(&v, t - tau, t - next, quad_tol)
        };
        tau = next;
    }
    Ok(tau)
}

/// Dummy-delay grid: `2N + 1` lags, uniform on `[0, a/v_max]` and on
/// `[a/v_max, a/v_min]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationGrid {
    pub n: usize,
    pub nodes: Vec<f64>,
}

impl DiscretizationGrid {
    pub fn new(spec: &ThresholdSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OperonError::Validation("grid needs N >= 1".into()));
        }
        let (t_mid, t_end) = (spec.tau_min(), spec.tau_max());
        let mut nodes = Vec::with_capacity(2 * n + 1);
        for j in 0..n {
            nodes.push(t_mid * j as f64 / n as f64);
        }
        nodes.push(t_mid);
        for j in 1..n {
            nodes.push(t_mid + (t_end - t_mid) * j as f64 / n as f64);
        }
        nodes.push(t_end);
        Ok(Self { n, nodes })
    }
}

/// Trapezoidal discretization of the threshold integral on the dummy-delay
/// grid, with the final partial subinterval solved exactly for a linearly
/// interpolated velocity.
pub fn delay_discretized<H: Fn(f64) -> f64>(
    spec: &ThresholdSpec,
    grid: &DiscretizationGrid,
    history: &H,
    t: f64,
) -> Result<f64> {
    if spec.law.is_constant() {
        return Ok(grid.nodes[grid.n]);
    }
    let a = spec.a;
    let mut v_prev = spec.velocity(history(t));
    let mut partial = 0.0;
    for j in 0..grid.nodes.len() - 1 {
        let (tj, tj1) = (grid.nodes[j], grid.nodes[j + 1]);
        let h = tj1 - tj;
        let v_next = spec.velocity(history(t - tj1));
        let step = 0.5 * (v_prev + v_next) * h;
        if partial + step > a {
            // ∫_0^s (v_j + (v_{j+1} - v_j) x / h) dx = R, minus branch in rationalized form
            let rest = a - partial;
            let d = v_prev - v_next;
            let disc = (v_prev * v_prev - 2.0 * d * rest / h).max(0.0);
            let s = 2.0 * rest / (v_prev + disc.sqrt());
            return Ok((tj + s).min(tj1));
        }
        partial += step;
        v_prev = v_next;
    }
    if partial >= a * (1.0 - 1e-12) {
        return Ok(*grid.nodes.last().unwrap());
    }
    Err(OperonError::Horizon(format!(
        "trapezoid sum over the whole grid is {partial} < a = {a}"
    )))
}

/// Time derivative of a threshold delay, `1 - v(now)/v(delayed)`.
pub fn delay_rate(v_now: f64, v_delayed: f64) -> Result<f64> {
    if !(v_delayed > 0.0) {
        return Err(OperonError::Evaluation(format!(
            "delayed velocity must be > 0, got {v_delayed}"
        )));
    }
    Ok(1.0 - v_now / v_delayed)
}
