//! Steady states through the scalar reduction
//! `g_E(E) = C e^{-μ(τ_I*(M*(E)) + τ_M*(E))} f(E) - E`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OperonError, Result};
use crate::model::{
    fraction_prime_unchecked, fraction_unchecked, OperonKind, OperonParameters, StateVector,
    Validation,
};

/// Every equilibrium quantity that depends on `E` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumProfile {
    pub e: f64,
    pub f: f64,
    pub f_prime: f64,
    pub vm: f64,
    pub vm_prime: f64,
    pub tau_m: f64,
    pub m: f64,
    pub vi: f64,
    pub vi_prime: f64,
    pub tau_i: f64,
    pub i: f64,
}

impl EquilibriumProfile {
    pub fn new(params: &OperonParameters, e: f64) -> Result<Self> {
        if !e.is_finite() || e < 0.0 {
            return Err(OperonError::Domain(format!(
                "E must be finite and >= 0, got {e}"
            )));
        }
        let law_m = params.transcription_velocity();
        let vm = law_m.value(e);
        if !(vm > 0.0) {
            return Err(OperonError::Evaluation(format!(
                "v_M({e}) = {vm} is not positive"
            )));
        }
        let tau_m = params.a_m / vm;
        let f = fraction_unchecked(params, e);
        let m = params.beta_m / params.gbar_m * (-params.mu * tau_m).exp() * f;
        let law_i = params.translation_velocity();
        let vi = law_i.value(m);
        let tau_i = params.a_i / vi;
        let i = params.beta_i * (-params.mu * tau_i).exp() * m / params.gbar_i;
        Ok(Self {
            e,
            f,
            f_prime: fraction_prime_unchecked(params, e),
            vm,
            vm_prime: law_m.derivative(e),
            tau_m,
            m,
            vi,
            vi_prime: law_i.derivative(m),
            tau_i,
            i,
        })
    }

    /// `e^{-μ(τ_M + τ_I)}`
    pub fn survival(&self, params: &OperonParameters) -> f64 {
        (-params.mu * (self.tau_m + self.tau_i)).exp()
    }

    pub fn g(&self, params: &OperonParameters) -> f64 {
        params.gain() * self.survival(params) * self.f - self.e
    }

    pub fn slope(&self, params: &OperonParameters) -> f64 {
        let mu = params.mu;
        let outer = self.f_prime + self.f * mu * self.tau_m * self.vm_prime / self.vm;
        let inner = 1.0 + mu * self.tau_i * (self.vi_prime / self.vi) * self.m;
        params.gain() * self.survival(params) * outer * inner - 1.0
    }
}

/// `M* = (β_M/γ̄_M) e^{-μ τ_M*(E)} f(E)`.
pub fn m_star_of_e(params: &OperonParameters, e: f64) -> Result<f64> {
    Ok(EquilibriumProfile::new(params, e)?.m)
}

pub fn g_e(params: &OperonParameters, e: f64) -> Result<f64> {
    Ok(EquilibriumProfile::new(params, e)?.g(params))
}

/// Analytic `d g_E / dE`.
pub fn g_e_slope(params: &OperonParameters, e: f64) -> Result<f64> {
    Ok(EquilibriumProfile::new(params, e)?.slope(params))
}

/// A steady state with its equilibrium delays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub m_star: f64,
    pub i_star: f64,
    pub e_star: f64,
    pub tau_m_star: f64,
    pub tau_i_star: f64,
    pub ge_slope: f64,
    /// Number of characteristic roots with positive real part, once computed.
    pub unstable_count: Option<usize>,
    /// Root found as a sign-preserving touch of zero rather than a crossing.
    pub tangent: bool,
}

impl SteadyState {
    /// Builds the record at `E` (no check that `g_E(E) = 0`).
    pub fn at(params: &OperonParameters, e: f64) -> Result<Self> {
        let p = EquilibriumProfile::new(params, e)?;
        Ok(Self {
            m_star: p.m,
            i_star: p.i,
            e_star: e,
            tau_m_star: p.tau_m,
            tau_i_star: p.tau_i,
            ge_slope: p.slope(params),
            unstable_count: None,
            tangent: false,
        })
    }

    pub fn state(&self) -> StateVector {
        StateVector::new(self.m_star, self.i_star, self.e_star)
    }

    /// Residuals of the three equilibrium equations.
    pub fn residuals(&self, params: &OperonParameters) -> [f64; 3] {
        let f = fraction_unchecked(params, self.e_star);
        [
            params.beta_m * (-params.mu * self.tau_m_star).exp() * f - params.gbar_m * self.m_star,
            params.beta_i * (-params.mu * self.tau_i_star).exp() * self.m_star
                - params.gbar_i * self.i_star,
            params.beta_e * self.i_star - params.gbar_e * self.e_star,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Upper end of the scanned interval; defaults to `1.5 C`.
    pub e_max: Option<f64>,
    pub resolution: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            e_max: None,
            resolution: 4096,
        }
    }
}

const MAX_RESOLUTION: usize = 1 << 20;

fn bisect_root(params: &OperonParameters, mut lo: f64, mut hi: f64, g_lo: f64) -> f64 {
    let lo_positive = g_lo > 0.0;
    while hi - lo > 1e-12 * (1.0 + lo.abs()) {
        let mid = 0.5 * (lo + hi);
        match g_e(params, mid) {
            Ok(g) if (g > 0.0) == lo_positive => lo = mid,
            Ok(_) => hi = mid,
            Err(_) => break,
        }
    }
    let mut e = 0.5 * (lo + hi);
    // Newton polish, kept inside the final bracket
    for _ in 0..3 {
        let Ok(p) = EquilibriumProfile::new(params, e) else {
            break;
        };
        let (g, s) = (p.g(params), p.slope(params));
        if g == 0.0 || s == 0.0 {
            break;
        }
        let next = e - g / s;
        if !(next >= lo && next <= hi) {
            break;
        }
        e = next;
    }
    e
}

/// Refines a sign-preserving local minimum of `|g_E|` between `lo` and `hi`.
fn tangent_root(params: &OperonParameters, mut lo: f64, mut hi: f64) -> Option<f64> {
    let s_lo = g_e_slope(params, lo).ok()?;
    let s_hi = g_e_slope(params, hi).ok()?;
    if (s_lo > 0.0) == (s_hi > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = g_e_slope(params, mid).ok()?;
        if (s > 0.0) == (s_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + lo) {
            break;
        }
    }
    let e = 0.5 * (lo + hi);
    (g_e(params, e).ok()?.abs() < 1e-9).then_some(e)
}

fn scan(params: &OperonParameters, e_max: f64, resolution: usize) -> Vec<(f64, bool)> {
    let h = e_max / resolution as f64;
    let values: Vec<f64> = (0..=resolution)
        .into_par_iter()
        .map(|k| g_e(params, k as f64 * h).unwrap_or(f64::NAN))
        .collect();
    let mut roots = Vec::new();
    for k in 0..resolution {
        let (a, b) = (values[k], values[k + 1]);
        if a.is_nan() || b.is_nan() {
            continue;
        }
        if (a > 0.0) != (b > 0.0) {
            roots.push((
                bisect_root(params, k as f64 * h, (k + 1) as f64 * h, a),
                false,
            ));
        }
    }
    // sign-preserving touches: interior local minima of |g|
    for k in 1..resolution {
        let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
        if a.is_nan() || b.is_nan() || c.is_nan() {
            continue;
        }
        let same_sign = (a > 0.0) == (b > 0.0) && (b > 0.0) == (c > 0.0);
        if same_sign && b.abs() < a.abs() && b.abs() <= c.abs() && b.abs() < 1e-6 {
            if let Some(e) = tangent_root(params, (k - 1) as f64 * h, (k + 1) as f64 * h) {
                roots.push((e, true));
            }
        }
    }
    roots.sort_by(|x, y| x.0.total_cmp(&y.0));
    roots.dedup_by(|x, y| (x.0 - y.0).abs() <= 1e-9);
    roots
}

/// All steady states with `E* ∈ [0, E_max]`, sorted by `E*`.
pub fn find_steady_states(
    params: &OperonParameters,
    options: &SteadyStateOptions,
) -> Result<Vec<SteadyState>> {
    params.validate(Validation::Relaxed)?;
    if options.resolution < 1000 {
        return Err(OperonError::Validation(format!(
            "resolution must be >= 1000, got {}",
            options.resolution
        )));
    }
    let e_max = options.e_max.unwrap_or(1.5 * params.gain());
    let mut resolution = options.resolution;
    let roots = loop {
        let roots = scan(params, e_max, resolution);
        let h = e_max / resolution as f64;
        let crowded = roots.windows(2).any(|w| w[1].0 - w[0].0 < 10.0 * h);
        if !crowded || resolution * 2 > MAX_RESOLUTION {
            break roots;
        }
        resolution *= 2;
    };
    if roots.is_empty() {
        return Err(OperonError::Internal(format!(
            "no steady state found in [0, {e_max}]"
        )));
    }
    roots
        .into_iter()
        .map(|(e, tangent)| {
            let mut s = SteadyState::at(params, e)?;
            s.tangent = tangent;
            Ok(s)
        })
        .collect()
}

/// Observed steady-state count against the `1 + 2χ_I + 2n_τ` bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Census {
    pub count: usize,
    pub chi_i: usize,
    pub n_tau: usize,
    pub bound: usize,
}

pub fn steady_state_census(params: &OperonParameters) -> Result<Census> {
    let chi_i = usize::from(params.kind == OperonKind::Inducible);
    let n_tau = params.state_dependent_delay_count();
    let count = find_steady_states(params, &SteadyStateOptions::default())?.len();
    Ok(Census {
        count,
        chi_i,
        n_tau,
        bound: 1 + 2 * chi_i + 2 * n_tau,
    })
}

/// Flux bounds and the absorbing box `Q = ∏ [d_k^< / b_k, d_k^> / b_k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DissipativityBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    /// Loss rates `(γ̄_M, γ̄_I, γ̄_E)`.
    pub rates: [f64; 3],
}

impl DissipativityBounds {
    pub fn box_lower(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.lower[k] / self.rates[k])
    }

    pub fn box_upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.upper[k] / self.rates[k])
    }

    /// Largest side length of the box.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = (self.box_lower(), self.box_upper());
        (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max)
    }

    /// Whether `x` lies in the box inflated by `margin` on every side.
    pub fn contains(&self, x: StateVector, margin: f64) -> bool {
        let (lo, hi) = (self.box_lower(), self.box_upper());
        x.as_array()
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= lo[k] - margin && *v <= hi[k] + margin)
    }
}

pub fn dissipativity_bounds(params: &OperonParameters) -> Result<DissipativityBounds> {
    if params.validate(Validation::Strict).is_err() {
        return Err(OperonError::Unsupported(
            "dissipativity bounds need strict-mode parameters".into(),
        ));
    }
    let mu = params.mu;
    let d1_hi = params.beta_m * params.vm_max / params.vm_min;
    let d1_lo = params.beta_m
        * (params.vm_min / params.vm_max)
        * (-mu * params.a_m / params.vm_min).exp()
        * params.fraction_min();
    let d2_lo = params.beta_i
        * (params.vi_min / params.vi_max)
        * (-mu * params.a_i / params.vi_min).exp()
        * d1_lo
        / params.gbar_m;
    let d2_hi = params.beta_i
        * (params.vi_max / params.vi_min)
        * (-mu * params.a_i / params.vi_max).exp()
        * d1_hi
        / params.gbar_m;
    let d3_lo = params.beta_e * d2_lo / params.gbar_i;
    let d3_hi = params.beta_e * d2_hi / params.gbar_i;
    Ok(DissipativityBounds {
        lower: [d1_lo, d2_lo, d3_lo],
        upper: [d1_hi, d2_hi, d3_hi],
        rates: [params.gbar_m, params.gbar_i, params.gbar_e],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn m_star_without_growth() {
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.mu = 0.0;
        let e = 0.7;
        let expected = p.beta_m / p.gbar_m * crate::model::fraction_f(&p, e).unwrap();
        assert!((m_star_of_e(&p, e).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn m_star_constant_velocity_at_zero() {
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.vm_min = 0.8;
        p.vm_max = 0.8;
        let expected = p.beta_m * (-p.mu * p.a_m / 0.8).exp() / p.gbar_m;
        assert!((m_star_of_e(&p, 0.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn inducible_m50_construction() {
        let p = fixtures::load("inducible_table3").unwrap();
        let m = m_star_of_e(&p, 2.0).unwrap();
        assert!((m - 0.3374).abs() < 5e-5, "M*(2) = {m}");
    }

    #[test]
    fn g_signs_at_ends() {
        for name in fixtures::names() {
            let p = fixtures::load(name).unwrap();
            assert!(g_e(&p, 0.0).unwrap() > 0.0);
            assert!(g_e(&p, 2.0 * p.gain()).unwrap() < 0.0);
        }
    }

    #[test]
    fn g_without_growth_is_delay_free() {
        let mut p = fixtures::load("twodelay_ind").unwrap();
        p.mu = 0.0;
        for e in [0.1, 1.0, 2.5] {
            let expected = p.gain() * crate::model::fraction_f(&p, e).unwrap() - e;
            assert!((g_e(&p, e).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn slope_constant_velocity_no_growth() {
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.mu = 0.0;
        p.vm_min = 1.0;
        p.vm_max = 1.0;
        let e = 0.6;
        let expected = p.gain() * crate::model::fraction_f_prime(&p, e).unwrap() - 1.0;
        assert!((g_e_slope(&p, e).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn census_of_the_four_reference_sets() {
        for (name, count) in [
            ("repressible_table3", 3),
            ("inducible_table3", 5),
            ("twodelay_rep", 5),
            ("twodelay_ind", 7),
        ] {
            let c = steady_state_census(&fixtures::load(name).unwrap()).unwrap();
            assert_eq!(c.count, count, "{name}");
            assert_eq!(c.bound, count, "{name}");
        }
    }

    #[test]
    fn census_bound_for_constant_delays() {
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.vm_min = p.vm_max;
        let c = steady_state_census(&p).unwrap();
        assert_eq!((c.bound, c.count), (1, 1));
        let mut q = fixtures::load("inducible_table3").unwrap();
        q.vm_min = q.vm_max;
        assert_eq!(steady_state_census(&q).unwrap().bound, 3);
    }

    #[test]
    fn steady_states_satisfy_equations() {
        for name in fixtures::names() {
            let p = fixtures::load(name).unwrap();
            for s in find_steady_states(&p, &SteadyStateOptions::default()).unwrap() {
                for r in s.residuals(&p) {
                    assert!(r.abs() <= 1e-10, "{name}: residual {r}");
                }
                assert!(g_e(&p, s.e_star).unwrap().abs() <= 1e-10 * (1.0 + p.gain()));
                assert!(s.e_star <= p.gain());
                assert!(s.i_star <= p.beta_m * p.beta_i / (p.gbar_m * p.gbar_i));
            }
        }
    }

    #[test]
    fn steady_states_lie_in_absorbing_box() {
        for name in fixtures::names() {
            let p = fixtures::load(name).unwrap();
            let q = dissipativity_bounds(&p).unwrap();
            for k in 0..3 {
                assert!(q.lower[k] > 0.0 && q.lower[k] <= q.upper[k]);
            }
            for s in find_steady_states(&p, &SteadyStateOptions::default()).unwrap() {
                assert!(q.contains(s.state(), 0.0), "{name}: {s:?}");
            }
        }
    }

    #[test]
    fn bounds_collapse_without_state_dependence() {
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.mu = 0.0;
        p.vm_min = 1.0;
        p.vm_max = 1.0;
        p.k1 = p.k * (1.0 - 1e-12);
        let q = dissipativity_bounds(&p).unwrap();
        assert_eq!(q.upper[0], p.beta_m);
        assert!((q.lower[0] - p.beta_m).abs() < 1e-11);
    }

    #[test]
    fn relaxed_parameters_rejected_by_bounds() {
        let mut p = fixtures::load("inducible_table6").unwrap();
        p.vm_min = -0.1;
        assert!(matches!(
            dissipativity_bounds(&p),
            Err(OperonError::Unsupported(_))
        ));
    }

    #[test]
    fn fold_slope_vanishes_when_roots_merge() {
        // two roots merge between 0.0174 and 0.0175 (lower fold)
        let mut p = fixtures::load("repressible_table3").unwrap();
        p.vm_min = 0.01741;
        let states = find_steady_states(&p, &SteadyStateOptions::default()).unwrap();
        assert_eq!(states.len(), 3);
        let gap = states[1].e_star - states[0].e_star;
        assert!(gap < 0.02, "gap {gap}");
        assert!(states[0].ge_slope.abs() < 0.1 && states[1].ge_slope.abs() < 0.1);
    }
}
