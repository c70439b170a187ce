//! Operon model definition: parameters, the operator response fraction,
//! the velocity laws and the right-hand side of the delayed system.
//!
//! Loss rates are stored as effective rates (degradation plus dilution),
//! so the growth rate `mu` only enters through the delay-dependent
//! exponential survival factors.

use serde::{Deserialize, Serialize};

use crate::error::{OperonError, Result};

/// Selects the form of the response fraction and the orientation of the
/// transcription velocity law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperonKind {
    /// Effector represses transcription initiation; `f` decreasing, `v_M` increasing.
    Repressible,
    /// Effector induces transcription initiation; `f` increasing, `v_M` decreasing.
    Inducible,
}

/// How strictly a parameter set is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    /// Required for simulation: both velocity laws strictly positive and ordered.
    Strict,
    /// Allows `vM_min <= 0` or `vM_min > vM_max`; evaluations guard `v_M > 0` pointwise.
    Relaxed,
}

/// Full parameter set for one model instance. JSON keys match the field
/// renames exactly; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperonParameters {
    pub kind: OperonKind,
    pub mu: f64,
    #[serde(rename = "beta_M")]
    pub beta_m: f64,
    #[serde(rename = "beta_I")]
    pub beta_i: f64,
    #[serde(rename = "beta_E")]
    pub beta_e: f64,
    #[serde(rename = "gbar_M")]
    pub gbar_m: f64,
    #[serde(rename = "gbar_I")]
    pub gbar_i: f64,
    #[serde(rename = "gbar_E")]
    pub gbar_e: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    pub n: f64,
    pub m: f64,
    #[serde(rename = "E50")]
    pub e50: f64,
    #[serde(rename = "vM_min")]
    pub vm_min: f64,
    #[serde(rename = "vM_max")]
    pub vm_max: f64,
    #[serde(rename = "mI")]
    pub m_i: f64,
    #[serde(rename = "M50")]
    pub m50: f64,
    #[serde(rename = "vI_min")]
    pub vi_min: f64,
    #[serde(rename = "vI_max")]
    pub vi_max: f64,
    #[serde(rename = "aM")]
    pub a_m: f64,
    #[serde(rename = "aI")]
    pub a_i: f64,
}

/// Names accepted by [`OperonParameters::get`] / [`OperonParameters::set`].
pub const PARAMETER_NAMES: [&str; 20] = [
    "mu", "beta_M", "beta_I", "beta_E", "gbar_M", "gbar_I", "gbar_E", "K", "K1", "n", "m", "E50",
    "vM_min", "vM_max", "mI", "M50", "vI_min", "vI_max", "aM", "aI",
];

impl OperonParameters {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    fn slot(&mut self, name: &str) -> Result<&mut f64> {
        Ok(match name {
            "mu" => &mut self.mu,
            "beta_M" => &mut self.beta_m,
            "beta_I" => &mut self.beta_i,
            "beta_E" => &mut self.beta_e,
            "gbar_M" => &mut self.gbar_m,
            "gbar_I" => &mut self.gbar_i,
            "gbar_E" => &mut self.gbar_e,
            "K" => &mut self.k,
            "K1" => &mut self.k1,
            "n" => &mut self.n,
            "m" => &mut self.m,
            "E50" => &mut self.e50,
            "vM_min" => &mut self.vm_min,
            "vM_max" => &mut self.vm_max,
            "mI" => &mut self.m_i,
            "M50" => &mut self.m50,
            "vI_min" => &mut self.vi_min,
            "vI_max" => &mut self.vi_max,
            "aM" => &mut self.a_m,
            "aI" => &mut self.a_i,
            other => return Err(OperonError::UnknownParameter(other.to_string())),
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut copy = self.clone();
        copy.slot(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        *self.slot(name)? = value;
        Ok(())
    }

    /// Copy with one named parameter replaced.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut copy = self.clone();
        copy.set(name, value)?;
        Ok(copy)
    }

    pub fn validate(&self, mode: Validation) -> Result<()> {
        let fail = |msg: String| Err(OperonError::Validation(msg));
        let named = [
            ("mu", self.mu),
            ("beta_M", self.beta_m),
            ("beta_I", self.beta_i),
            ("beta_E", self.beta_e),
            ("gbar_M", self.gbar_m),
            ("gbar_I", self.gbar_i),
            ("gbar_E", self.gbar_e),
            ("K", self.k),
            ("K1", self.k1),
            ("n", self.n),
            ("m", self.m),
            ("E50", self.e50),
            ("vM_min", self.vm_min),
            ("vM_max", self.vm_max),
            ("mI", self.m_i),
            ("M50", self.m50),
            ("vI_min", self.vi_min),
            ("vI_max", self.vi_max),
            ("aM", self.a_m),
            ("aI", self.a_i),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return fail(format!("{name} must be finite, got {value}"));
            }
        }
        if self.mu < 0.0 {
            return fail(format!("mu must be >= 0, got {}", self.mu));
        }
        for (name, value) in [
            ("beta_M", self.beta_m),
            ("beta_I", self.beta_i),
            ("beta_E", self.beta_e),
            ("gbar_M", self.gbar_m),
            ("gbar_I", self.gbar_i),
            ("gbar_E", self.gbar_e),
            ("aM", self.a_m),
            ("aI", self.a_i),
            ("E50", self.e50),
            ("M50", self.m50),
            ("m", self.m),
            ("mI", self.m_i),
        ] {
            if value <= 0.0 {
                return fail(format!("{name} must be > 0, got {value}"));
            }
        }
        if self.n <= 1.0 {
            return fail(format!("n must be > 1, got {}", self.n));
        }
        if self.k1 < 0.0 {
            return fail(format!("K1 must be >= 0, got {}", self.k1));
        }
        match self.kind {
            OperonKind::Repressible if self.k <= self.k1 => {
                return fail(format!(
                    "repressible operon requires K > K1 ({} <= {})",
                    self.k, self.k1
                ))
            }
            OperonKind::Inducible if self.k <= 1.0 => {
                return fail(format!("inducible operon requires K > 1, got {}", self.k))
            }
            _ => {}
        }
        if !(self.vi_min > 0.0 && self.vi_min <= self.vi_max) {
            return fail(format!(
                "translation velocity bounds need 0 < vI_min <= vI_max, got [{}, {}]",
                self.vi_min, self.vi_max
            ));
        }
        if mode == Validation::Strict && !(self.vm_min > 0.0 && self.vm_min <= self.vm_max) {
            return fail(format!(
                "strict mode needs 0 < vM_min <= vM_max, got [{}, {}]",
                self.vm_min, self.vm_max
            ));
        }
        if self.vm_max <= 0.0 {
            return fail(format!("vM_max must be > 0, got {}", self.vm_max));
        }
        Ok(())
    }

    pub fn is_strict(&self) -> bool {
        self.validate(Validation::Strict).is_ok()
    }

    /// `beta_M beta_I beta_E / (gbar_M gbar_I gbar_E)`, the upper bound on `E*`.
    pub fn gain(&self) -> f64 {
        self.beta_m * self.beta_i * self.beta_e / (self.gbar_m * self.gbar_i * self.gbar_e)
    }

    pub fn transcription_velocity(&self) -> HillVelocity {
        match self.kind {
            OperonKind::Repressible => HillVelocity {
                at_zero: self.vm_min,
                at_infinity: self.vm_max,
                half: self.e50,
                exponent: self.m,
            },
            OperonKind::Inducible => HillVelocity {
                at_zero: self.vm_max,
                at_infinity: self.vm_min,
                half: self.e50,
                exponent: self.m,
            },
        }
    }

    pub fn translation_velocity(&self) -> HillVelocity {
        HillVelocity {
            at_zero: self.vi_max,
            at_infinity: self.vi_min,
            half: self.m50,
            exponent: self.m_i,
        }
    }

    pub fn transcription_delay_is_state_dependent(&self) -> bool {
        self.vm_min != self.vm_max
    }

    pub fn translation_delay_is_state_dependent(&self) -> bool {
        self.vi_min != self.vi_max
    }

    /// Number of delays that actually depend on the state.
    pub fn state_dependent_delay_count(&self) -> usize {
        usize::from(self.transcription_delay_is_state_dependent())
            + usize::from(self.translation_delay_is_state_dependent())
    }

    /// Infimum of the response fraction: `K1/K` (repressible) or `1/K` (inducible).
    pub fn fraction_min(&self) -> f64 {
        match self.kind {
            OperonKind::Repressible => self.k1 / self.k,
            OperonKind::Inducible => 1.0 / self.k,
        }
    }
}

/// Logistic function in a form that never overflows.
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `s (1 - s)` for `s = logistic(z)`, evaluated without cancellation.
fn logistic_slope(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Hill-type velocity law `(v0 h^p + vinf x^p) / (h^p + x^p)`.
///
/// Evaluated as `v0 + (vinf - v0) * logistic(p ln(x/h))`, which stays finite
/// for large exponents (the inducible fixtures use `mI = 80`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HillVelocity {
    /// Value at zero argument.
    pub at_zero: f64,
    /// Limit as the argument grows without bound.
    pub at_infinity: f64,
    /// Half-saturation argument.
    pub half: f64,
    pub exponent: f64,
}

impl HillVelocity {
    pub fn min(&self) -> f64 {
        self.at_zero.min(self.at_infinity)
    }

    pub fn max(&self) -> f64 {
        self.at_zero.max(self.at_infinity)
    }

    pub fn is_constant(&self) -> bool {
        self.at_zero == self.at_infinity
    }

    pub fn value(&self, x: f64) -> f64 {
        if self.is_constant() || x <= 0.0 {
            return self.at_zero;
        }
        let z = self.exponent * (x / self.half).ln();
        self.at_zero + (self.at_infinity - self.at_zero) * logistic(z)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if self.is_constant() {
            return 0.0;
        }
        let span = self.at_infinity - self.at_zero;
        if x <= 0.0 {
            return if self.exponent > 1.0 {
                0.0
            } else if self.exponent == 1.0 {
                span / self.half
            } else {
                span.signum() * f64::INFINITY
            };
        }
        let z = self.exponent * (x / self.half).ln();
        span * self.exponent * logistic_slope(z) / x
    }
}

fn check_argument(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(OperonError::Domain(format!(
            "{name} must be finite, got {x}"
        )));
    }
    if x < 0.0 {
        return Err(OperonError::Domain(format!("{name} must be >= 0, got {x}")));
    }
    Ok(())
}

/// Fraction of free operator sites at effector level `e`.
pub fn fraction_f(params: &OperonParameters, e: f64) -> Result<f64> {
    check_argument("E", e)?;
    Ok(fraction_unchecked(params, e))
}

pub(crate) fn fraction_unchecked(params: &OperonParameters, e: f64) -> f64 {
    let (k, k1) = (params.k, params.k1);
    if e == 0.0 {
        return match params.kind {
            OperonKind::Repressible => 1.0,
            OperonKind::Inducible => 1.0 / k,
        };
    }
    let log_x = params.n * e.ln();
    if log_x <= 0.0 {
        let x = log_x.exp();
        match params.kind {
            OperonKind::Repressible => (1.0 + k1 * x) / (1.0 + k * x),
            OperonKind::Inducible => (1.0 + k1 * x) / (k + k1 * x),
        }
    } else {
        // divide through by E^n
        let w = (-log_x).exp();
        match params.kind {
            OperonKind::Repressible => (w + k1) / (w + k),
            OperonKind::Inducible => (w + k1) / (k * w + k1),
        }
    }
}

/// Analytic derivative of [`fraction_f`].
pub fn fraction_f_prime(params: &OperonParameters, e: f64) -> Result<f64> {
    check_argument("E", e)?;
    Ok(fraction_prime_unchecked(params, e))
}

pub(crate) fn fraction_prime_unchecked(params: &OperonParameters, e: f64) -> f64 {
    let (k, k1, n) = (params.k, params.k1, params.n);
    if e == 0.0 {
        return 0.0;
    }
    let log_x = n * e.ln();
    // d(E^n)/dE = n E^n / E; the remaining factor is written in x or 1/x.
    let scaled = if log_x <= 0.0 {
        let x = log_x.exp();
        match params.kind {
            OperonKind::Repressible => (k1 - k) * x / ((1.0 + k * x) * (1.0 + k * x)),
            OperonKind::Inducible => k1 * (k - 1.0) * x / ((k + k1 * x) * (k + k1 * x)),
        }
    } else {
        let w = (-log_x).exp();
        match params.kind {
            OperonKind::Repressible => (k1 - k) * w / ((w + k) * (w + k)),
            OperonKind::Inducible => k1 * (k - 1.0) * w / ((k * w + k1) * (k * w + k1)),
        }
    };
    n * scaled / e
}

pub fn velocity_vm(params: &OperonParameters, e: f64) -> Result<f64> {
    check_argument("E", e)?;
    Ok(params.transcription_velocity().value(e))
}

pub fn velocity_vm_prime(params: &OperonParameters, e: f64) -> Result<f64> {
    check_argument("E", e)?;
    Ok(params.transcription_velocity().derivative(e))
}

pub fn velocity_vi(params: &OperonParameters, m: f64) -> Result<f64> {
    check_argument("M", m)?;
    Ok(params.translation_velocity().value(m))
}

pub fn velocity_vi_prime(params: &OperonParameters, m: f64) -> Result<f64> {
    check_argument("M", m)?;
    Ok(params.translation_velocity().derivative(m))
}

/// Concentrations of mRNA, intermediate and effector at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

impl StateVector {
    pub const fn new(m: f64, i: f64, e: f64) -> Self {
        Self { m, i, e }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.m, self.i, self.e]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.m.is_finite() && self.i.is_finite() && self.e.is_finite()
    }
}

/// Delays and the delayed state values the right-hand side needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayedArguments {
    pub tau_m: f64,
    pub tau_i: f64,
    /// `E(t - tau_M)`
    pub e_delayed: f64,
    /// `M(t - tau_I)`
    pub m_delayed: f64,
}

/// Right-hand side of the delayed system:
///
/// ```text
/// M' = beta_M e^{-mu tau_M} v_M(E)/v_M(E(t-tau_M)) f(E(t-tau_M)) - gbar_M M
/// I' = beta_I e^{-mu tau_I} v_I(M)/v_I(M(t-tau_I)) M(t-tau_I)    - gbar_I I
/// E' = beta_E I - gbar_E E
/// ```
pub fn rhs(
    params: &OperonParameters,
    now: StateVector,
    delayed: DelayedArguments,
) -> Result<StateVector> {
    let vm = params.transcription_velocity();
    let vi = params.translation_velocity();
    let vm_now = vm.value(now.e.max(0.0));
    let vm_then = vm.value(delayed.e_delayed.max(0.0));
    if vm_now <= 0.0 || vm_then <= 0.0 {
        return Err(OperonError::Evaluation(format!(
            "transcription velocity not positive (v_M(E)={vm_now}, v_M(E delayed)={vm_then})"
        )));
    }
    let m_ratio = if vm.is_constant() {
        1.0
    } else {
        vm_now / vm_then
    };
    let i_ratio = if vi.is_constant() {
        1.0
    } else {
        vi.value(now.m.max(0.0)) / vi.value(delayed.m_delayed.max(0.0))
    };
    let f = fraction_unchecked(params, delayed.e_delayed.max(0.0));
    Ok(StateVector {
        m: params.beta_m * (-params.mu * delayed.tau_m).exp() * m_ratio * f - params.gbar_m * now.m,
        i: params.beta_i * (-params.mu * delayed.tau_i).exp() * i_ratio * delayed.m_delayed
            - params.gbar_i * now.i,
        e: params.beta_e * now.i - params.gbar_e * now.e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn rep() -> OperonParameters {
        fixtures::load("repressible_table3").unwrap()
    }

    fn ind() -> OperonParameters {
        fixtures::load("inducible_table3").unwrap()
    }

    #[test]
    fn fraction_endpoints() {
        assert_eq!(fraction_f(&rep(), 0.0).unwrap(), 1.0);
        let p = ind();
        assert_eq!(fraction_f(&p, 0.0).unwrap(), 1.0 / p.k);
        let mut p = rep();
        p.k = 2.0;
        p.k1 = 1.0;
        p.n = 5.0;
        assert!((fraction_f(&p, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn fraction_prime_zero_and_sign() {
        assert_eq!(fraction_f_prime(&rep(), 0.0).unwrap(), 0.0);
        for e in [0.1, 0.7, 1.3, 4.0] {
            assert!(fraction_f_prime(&rep(), e).unwrap() < 0.0);
            assert!(fraction_f_prime(&ind(), e).unwrap() > 0.0);
        }
    }

    #[test]
    fn non_finite_argument_is_domain_error() {
        assert!(matches!(
            fraction_f(&rep(), f64::NAN),
            Err(OperonError::Domain(_))
        ));
        assert!(matches!(
            fraction_f_prime(&rep(), f64::INFINITY),
            Err(OperonError::Domain(_))
        ));
        assert!(matches!(
            velocity_vm(&rep(), -1.0),
            Err(OperonError::Domain(_))
        ));
    }

    #[test]
    fn inducible_fraction_has_one_inflection() {
        // f'' by central differences of the analytic f'
        let p = ind();
        let mut signs = Vec::new();
        let mut e = 0.01;
        while e < 6.0 {
            let h = 1e-5 * (1.0 + e);
            let f2 = (fraction_prime_unchecked(&p, e + h) - fraction_prime_unchecked(&p, e - h))
                / (2.0 * h);
            if f2.abs() > 1e-9 {
                signs.push(f2.signum());
            }
            e += 0.01;
        }
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn velocities_half_max_and_limits() {
        let p = rep();
        let vm = velocity_vm(&p, p.e50).unwrap();
        assert!((vm - 0.5 * (p.vm_min + p.vm_max)).abs() < 1e-14);
        assert_eq!(velocity_vm(&p, 0.0).unwrap(), p.vm_min);
        let q = ind();
        assert_eq!(velocity_vm(&q, 0.0).unwrap(), q.vm_max);
        let mut q2 = q.clone();
        q2.vi_min = 0.5;
        let vi = velocity_vi(&q2, q2.m50).unwrap();
        assert!((vi - 0.5 * (q2.vi_min + q2.vi_max)).abs() < 1e-14);
        assert_eq!(velocity_vi(&q2, 0.0).unwrap(), q2.vi_max);
    }

    #[test]
    fn degenerate_velocity_is_constant() {
        let mut p = rep();
        p.vm_min = 0.7;
        p.vm_max = 0.7;
        for e in [0.0, 0.3, 1.0, 50.0] {
            assert_eq!(velocity_vm(&p, e).unwrap(), 0.7);
            assert_eq!(velocity_vm_prime(&p, e).unwrap(), 0.0);
        }
        assert_eq!(velocity_vi(&p, 3.0).unwrap(), 1.0);
        assert_eq!(velocity_vi_prime(&p, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn large_hill_exponent_stays_finite() {
        let mut p = ind();
        p.vi_min = 1.1;
        for m in [0.0, 1e-12, 0.3374, 1.0, 1e3, 1e200] {
            let v = velocity_vi(&p, m).unwrap();
            let d = velocity_vi_prime(&p, m).unwrap();
            assert!(v.is_finite() && d.is_finite(), "M={m}: v={v} d={d}");
            assert!((p.vi_min..=p.vi_max).contains(&v));
        }
        let mut p = rep();
        p.n = 80.0;
        for e in [1e-300, 0.5, 2.0, 1e10] {
            assert!(fraction_f(&p, e).unwrap().is_finite());
            assert!(fraction_f_prime(&p, e).unwrap().is_finite());
        }
    }

    #[test]
    fn rhs_constant_velocity_reduces_to_goodwin() {
        let mut p = rep();
        p.mu = 0.0;
        p.vm_min = 1.0;
        p.vm_max = 1.0;
        let now = StateVector::new(0.4, 0.5, 0.6);
        let d = DelayedArguments {
            tau_m: 1.0,
            tau_i: 1.0,
            e_delayed: 0.8,
            m_delayed: 0.3,
        };
        let out = rhs(&p, now, d).unwrap();
        let f = fraction_f(&p, 0.8).unwrap();
        assert!((out.m - (p.beta_m * f - p.gbar_m * 0.4)).abs() < 1e-15);
        assert!((out.i - (p.beta_i * 0.3 - p.gbar_i * 0.5)).abs() < 1e-15);
        assert!((out.e - (p.beta_e * 0.5 - p.gbar_e * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn relaxed_velocity_guard() {
        let mut p = fixtures::load("inducible_table6").unwrap();
        p.vm_min = -0.2;
        assert!(p.validate(Validation::Relaxed).is_ok());
        assert!(p.validate(Validation::Strict).is_err());
        let now = StateVector::new(1.0, 1.0, 50.0);
        let d = DelayedArguments {
            tau_m: 1.0,
            tau_i: 0.5,
            e_delayed: 50.0,
            m_delayed: 1.0,
        };
        assert!(matches!(rhs(&p, now, d), Err(OperonError::Evaluation(_))));
    }

    #[test]
    fn validation_rejects_bad_sets() {
        let mut p = rep();
        p.k1 = 3.0;
        assert!(p.validate(Validation::Relaxed).is_err());
        let mut p = ind();
        p.k = 0.5;
        assert!(p.validate(Validation::Relaxed).is_err());
        let mut p = rep();
        p.n = 1.0;
        assert!(p.validate(Validation::Relaxed).is_err());
    }

    #[test]
    fn named_parameter_access() {
        let mut p = rep();
        for name in PARAMETER_NAMES {
            let v = p.get(name).unwrap();
            p.set(name, v).unwrap();
        }
        assert_eq!(p, rep());
        assert!(matches!(
            p.set("gamma", 1.0),
            Err(OperonError::UnknownParameter(_))
        ));
        assert_eq!(p.with("vM_min", 0.2).unwrap().vm_min, 0.2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = OperonParameters> {
            (any::<bool>(), 1.5f64..12.0, 0.0f64..3.0, 1.1f64..20.0).prop_map(
                |(repressible, k_extra, k1, n)| {
                    let mut p = if repressible { rep() } else { ind() };
                    p.k1 = k1;
                    p.k = if repressible {
                        k1 + k_extra
                    } else {
                        1.0 + k_extra
                    };
                    p.n = n;
                    p
                },
            )
        }

        fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
            let h = 1e-6 * (1.0 + x);
            (f(x + h) - f(x - h)) / (2.0 * h)
        }

        proptest! {
            #[test]
            fn fraction_derivative_matches_differences(p in params(), e in 0.01f64..5.0) {
                let fd = central(|x| fraction_f(&p, x).unwrap(), e);
                let exact = fraction_f_prime(&p, e).unwrap();
                prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{fd} vs {exact}");
            }

            #[test]
            fn fraction_is_monotone_and_bounded(p in params(), e in 0.0f64..10.0, de in 1e-3f64..1.0) {
                let (a, b) = (fraction_f(&p, e).unwrap(), fraction_f(&p, e + de).unwrap());
                let (lo, hi) = (p.fraction_min().min(1.0), p.fraction_min().max(1.0));
                prop_assert!(a >= lo - 1e-15 && a <= hi + 1e-15);
                match p.kind {
                    OperonKind::Repressible => prop_assert!(b <= a),
                    OperonKind::Inducible => prop_assert!(b >= a),
                }
            }

            #[test]
            fn velocity_derivative_and_range(v0 in 0.01f64..3.0, vinf in 0.01f64..3.0, h in 0.1f64..3.0,
                                             p in 1.0f64..40.0, x in 0.01f64..6.0) {
                let law = HillVelocity { at_zero: v0, at_infinity: vinf, half: h, exponent: p };
                let v = law.value(x);
                prop_assert!(v >= law.min() - 1e-15 && v <= law.max() + 1e-15);
                let fd = central(|y| law.value(y), x);
                let d = law.derivative(x);
                prop_assert!((fd - d).abs() <= 1e-5 * (1.0 + d.abs()), "{fd} vs {d}");
            }
        }
    }
}
