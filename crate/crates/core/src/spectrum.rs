//! Characteristic equation of a steady state, its roots, eigenvectors and
//! stability classification.
//!
//! The characteristic function is
//!
//! ```text
//! Δ(λ) = (γ̄_M+λ)(γ̄_I+λ)(γ̄_E+λ) - β_M β_I β_E e^{-μ(τ_M*+τ_I*)} k(λ)
//! k(λ) = [f (v_M'/v_M) φ(λ,τ_M*) + f' e^{-λτ_M*}] [M* (v_I'/v_I) φ(λ,τ_I*) + e^{-λτ_I*}]
//! φ(λ,τ) = (1 - e^{-λτ})(1 + μ/λ)
//! ```
//!
//! so that `Δ(0) = -γ̄_M γ̄_I γ̄_E g_E'(E*)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{EquilibriumProfile, SteadyState};
use crate::error::{OperonError, Result};
use crate::model::OperonParameters;

const SERIES_CUTOFF: f64 = 1e-4;

/// `e^z - 1` without cancellation for small `|z|`.
fn expm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

/// `(1 - e^{-λτ}) / λ`, with the removable singularity at `λ = 0` filled in.
fn one_minus_exp_over(lambda: Complex64, tau: f64) -> Complex64 {
    let z = lambda * tau;
    if z.norm() < SERIES_CUTOFF {
        tau * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0)
    } else {
        -expm1(-z) / lambda
    }
}

/// `φ(λ, τ) = (1 - e^{-λτ})(1 + μ/λ)`, equal to `μτ` at `λ = 0`.
pub fn phi_factor(lambda: Complex64, tau: f64, mu: f64) -> Complex64 {
    (lambda + mu) * one_minus_exp_over(lambda, tau)
}

/// Cached steady-state quantities entering `Δ`.
#[derive(Debug, Clone)]
pub struct CharacteristicContext {
    pub params: OperonParameters,
    pub steady: SteadyState,
    pub f: f64,
    pub f_prime: f64,
    pub vm: f64,
    pub vm_prime: f64,
    pub vi: f64,
    pub vi_prime: f64,
    /// `β_M (v_M'/v_M) e^{-μτ_M*} f`
    pub a1: f64,
    /// `β_I (v_I'/v_I) e^{-μτ_I*} M*`
    pub a2: f64,
}

impl CharacteristicContext {
    pub fn new(params: &OperonParameters, steady: &SteadyState) -> Result<Self> {
        let p = EquilibriumProfile::new(params, steady.e_star)?;
        let a1 = params.beta_m * (p.vm_prime / p.vm) * (-params.mu * p.tau_m).exp() * p.f;
        let a2 = params.beta_i * (p.vi_prime / p.vi) * (-params.mu * p.tau_i).exp() * p.m;
        Ok(Self {
            params: params.clone(),
            steady: SteadyState {
                m_star: p.m,
                i_star: p.i,
                tau_m_star: p.tau_m,
                tau_i_star: p.tau_i,
                ..*steady
            },
            f: p.f,
            f_prime: p.f_prime,
            vm: p.vm,
            vm_prime: p.vm_prime,
            vi: p.vi,
            vi_prime: p.vi_prime,
            a1,
            a2,
        })
    }

    /// Context at `E` on the equilibrium curve (no check that `g_E(E) = 0`).
    pub fn at(params: &OperonParameters, e: f64) -> Result<Self> {
        Self::new(params, &SteadyState::at(params, e)?)
    }

    fn tau_m(&self) -> f64 {
        self.steady.tau_m_star
    }

    fn tau_i(&self) -> f64 {
        self.steady.tau_i_star
    }

    /// `∏ (γ̄_k + λ)`
    pub fn cubic(&self, lambda: Complex64) -> Complex64 {
        let p = &self.params;
        (lambda + p.gbar_m) * (lambda + p.gbar_i) * (lambda + p.gbar_e)
    }

    /// Matrix entry `A13 = β_M e^{-μτ_M}(f (v_M'/v_M) φ(λ,τ_M) + f' e^{-λτ_M})`.
    pub fn a13(&self, lambda: Complex64) -> Complex64 {
        let p = &self.params;
        let tau = self.tau_m();
        let bracket = self.f * (self.vm_prime / self.vm) * phi_factor(lambda, tau, p.mu)
            + self.f_prime * (-lambda * tau).exp();
        p.beta_m * (-p.mu * tau).exp() * bracket
    }

    /// Matrix entry `A21 = β_I e^{-μτ_I}(M* (v_I'/v_I) φ(λ,τ_I) + e^{-λτ_I})`.
    pub fn a21(&self, lambda: Complex64) -> Complex64 {
        let p = &self.params;
        let tau = self.tau_i();
        let bracket =
            self.steady.m_star * (self.vi_prime / self.vi) * phi_factor(lambda, tau, p.mu)
                + (-lambda * tau).exp();
        p.beta_i * (-p.mu * tau).exp() * bracket
    }

    /// The delayed feedback term `β_E A13 A21`.
    pub fn feedback(&self, lambda: Complex64) -> Complex64 {
        self.params.beta_e * self.a13(lambda) * self.a21(lambda)
    }

    pub fn delta(&self, lambda: Complex64) -> Complex64 {
        self.cubic(lambda) - self.feedback(lambda)
    }

    /// Magnitude scale of `Δ` near `λ`, used for relative residuals.
    pub fn scale(&self, lambda: Complex64) -> f64 {
        self.cubic(lambda).norm() + self.feedback(lambda).norm()
    }

    /// `Δ` assembled from the `k_1 k_2` factorization with `A1`, `A2`.
    pub fn delta_factored(&self, lambda: Complex64) -> Complex64 {
        let p = &self.params;
        let (tm, ti) = (self.tau_m(), self.tau_i());
        let em = (-lambda * tm).exp();
        let ei = (-lambda * ti).exp();
        let k1 = self.a1
            + (p.beta_m * (-p.mu * tm).exp() * self.f_prime - self.a1) * em
            + p.mu * self.a1 * one_minus_exp_over(lambda, tm);
        let k2 = self.a2
            + (p.beta_i * (-p.mu * ti).exp() - self.a2) * ei
            + p.mu * self.a2 * one_minus_exp_over(lambda, ti);
        self.cubic(lambda) - p.beta_e * k1 * k2
    }

    /// `Δ(iω) / ∏(iω + γ̄)`, which tends to 1 as `ω → ∞`.
    fn ratio(&self, omega: f64) -> Complex64 {
        let l = Complex64::new(0.0, omega);
        1.0 - self.feedback(l) / self.cubic(l)
    }

    /// Frequency beyond which `|1 - Δ/∏| < 1/2` on the imaginary axis.
    fn frequency_bound(&self) -> f64 {
        let p = &self.params;
        let em = p.beta_m * (-p.mu * self.tau_m()).exp();
        let ei = p.beta_i * (-p.mu * self.tau_i()).exp();
        let cm = (self.f * self.vm_prime / self.vm).abs();
        let ci = (self.steady.m_star * self.vi_prime / self.vi).abs();
        let bound = |w: f64| {
            let phi = 2.0 * (w * w + p.mu * p.mu).sqrt() / w;
            let a13 = em * (cm * phi + self.f_prime.abs());
            let a21 = ei * (ci * phi + 1.0);
            let cubic = [p.gbar_m, p.gbar_i, p.gbar_e]
                .iter()
                .map(|g| (w * w + g * g).sqrt())
                .product::<f64>();
            p.beta_e * a13 * a21 / cubic
        };
        let mut w = 1.0;
        while bound(w) >= 0.5 && w < 1e8 {
            w *= 2.0;
        }
        w
    }

    fn newton_derivative(&self, lambda: Complex64) -> Complex64 {
        let h = 1e-7 * (1.0 + lambda.norm());
        (self.delta(lambda + h) - self.delta(lambda - h)) / (2.0 * h)
    }
}

/// Rectangle `Re ∈ [re_lo, re_hi]`, `Im ∈ [0, im_hi]` of the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Region {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_hi: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            re_lo: -5.0,
            re_hi: 3.0,
            im_hi: 60.0,
        }
    }
}

impl Region {
    fn contains(&self, l: Complex64) -> bool {
        l.re >= self.re_lo && l.re <= self.re_hi && l.im >= 0.0 && l.im <= self.im_hi
    }
}

/// Seed grid density for [`find_roots`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedGrid {
    pub n_re: usize,
    /// Minimum count along the imaginary direction; raised to
    /// `im_hi (τ_M + τ_I) / π` so every branch of the exponential terms is seeded.
    pub n_im: usize,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self { n_re: 40, n_im: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicRoot {
    pub lambda: Complex64,
    pub residual: f64,
    /// 2 when `Δ'` nearly vanishes at the root, 1 otherwise.
    pub multiplicity_hint: u8,
}

const ROOT_TOL: f64 = 1e-9;

fn newton_real(ctx: &CharacteristicContext, mut x: f64) -> Option<f64> {
    let d = |x: f64| ctx.delta(Complex64::new(x, 0.0)).re;
    let mut fx = d(x);
    for _ in 0..80 {
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (d(x + h) - d(x - h)) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            return None;
        }
        let step = fx / slope;
        let mut damp = 1.0;
        let (mut next, mut f_next) = (x - step, d(x - step));
        while !(f_next.abs() < fx.abs()) && damp > 1e-3 {
            damp *= 0.5;
            next = x - damp * step;
            f_next = d(next);
        }
        x = next;
        fx = f_next;
        if (damp * step).abs() < 1e-14 * (1.0 + x.abs()) || fx == 0.0 {
            break;
        }
    }
    let scale = ctx.scale(Complex64::new(x, 0.0));
    (x.is_finite() && fx.abs() <= ROOT_TOL * scale).then_some(x)
}

fn newton_complex(ctx: &CharacteristicContext, mut l: Complex64) -> Option<Complex64> {
    let mut fl = ctx.delta(l);
    for _ in 0..80 {
        let slope = ctx.newton_derivative(l);
        if slope.norm() == 0.0 || !slope.is_finite() {
            return None;
        }
        let step = fl / slope;
        let mut damp = 1.0;
        let (mut next, mut f_next) = (l - step, ctx.delta(l - step));
        while !(f_next.norm() < fl.norm()) && damp > 1e-3 {
            damp *= 0.5;
            next = l - step * damp;
            f_next = ctx.delta(next);
        }
        l = next;
        fl = f_next;
        if (step * damp).norm() < 1e-14 * (1.0 + l.norm()) || fl.norm() == 0.0 {
            break;
        }
        if l.re > 1e3 || l.re < -1e3 || l.im.abs() > 1e6 {
            return None;
        }
    }
    (l.is_finite() && fl.norm() <= ROOT_TOL * ctx.scale(l)).then_some(l)
}

fn make_root(ctx: &CharacteristicContext, lambda: Complex64) -> CharacteristicRoot {
    let residual = ctx.delta(lambda).norm();
    let slope = ctx.newton_derivative(lambda).norm();
    let multiplicity_hint = if slope < 1e-6 * ctx.scale(lambda) {
        2
    } else {
        1
    };
    CharacteristicRoot {
        lambda,
        residual,
        multiplicity_hint,
    }
}

fn dedup_sorted(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let mut kept: Vec<Complex64> = Vec::new();
    for r in roots {
        if !kept.iter().any(|k| (k - r).norm() <= 1e-7) {
            kept.push(r);
        }
    }
    kept
}

/// Characteristic roots in `region` by damped Newton from a seed grid.
///
/// Seeds that fail to converge are dropped; roots are deduplicated within
/// `1e-7` and sorted by descending real part. Only `Im λ ≥ 0` is reported.
pub fn find_roots(
    ctx: &CharacteristicContext,
    region: &Region,
    seeds: &SeedGrid,
) -> Vec<CharacteristicRoot> {
    let tau_total = ctx.tau_m() + ctx.tau_i();
    let n_im = seeds
        .n_im
        .max((region.im_hi * tau_total / std::f64::consts::PI).ceil() as usize);
    let n_re = seeds.n_re.max(2);
    let re_at =
        |i: usize| region.re_lo + (region.re_hi - region.re_lo) * i as f64 / (n_re - 1) as f64;
    let mut found: Vec<Complex64> = (0..n_re)
        .into_par_iter()
        .filter_map(|i| newton_real(ctx, re_at(i)).map(|x| Complex64::new(x, 0.0)))
        .collect();
    let complex: Vec<Complex64> = (0..n_re * n_im)
        .into_par_iter()
        .filter_map(|k| {
            let (i, j) = (k % n_re, k / n_re);
            let seed = Complex64::new(re_at(i), region.im_hi * (j + 1) as f64 / n_im as f64);
            let mut l = newton_complex(ctx, seed)?;
            if l.im < 0.0 {
                l = l.conj();
            }
            if l.im < 1e-9 * (1.0 + l.norm()) {
                return newton_real(ctx, l.re).map(|x| Complex64::new(x, 0.0));
            }
            Some(l)
        })
        .collect();
    found.extend(complex);
    found.retain(|l| region.contains(*l));
    dedup_sorted(found)
        .into_iter()
        .map(|l| make_root(ctx, l))
        .collect()
}

/// Continuous change of `arg(Δ/∏)` between two frequencies, refined until
/// every increment is small.
fn arg_change(
    ctx: &CharacteristicContext,
    w0: f64,
    r0: Complex64,
    w1: f64,
    r1: Complex64,
    depth: u32,
) -> f64 {
    let d = (r1 / r0).arg();
    if d.abs() <= 0.3 || depth >= 60 || w1 - w0 <= 1e-13 * (1.0 + w1) {
        return d;
    }
    let wm = 0.5 * (w0 + w1);
    let rm = ctx.ratio(wm);
    arg_change(ctx, w0, r0, wm, rm, depth + 1) + arg_change(ctx, wm, rm, w1, r1, depth + 1)
}

/// Argument-principle index `-(1/π) Δ_{ω∈[0,∞)} arg(Δ(iω)/∏(iω+γ̄))`,
/// the number of roots with positive real part (non-integer only when a
/// root sits on the imaginary axis).
pub fn unstable_index(ctx: &CharacteristicContext) -> f64 {
    let w_max = ctx.frequency_bound();
    let tau_total = (ctx.tau_m() + ctx.tau_i()).max(1.0);
    let dw = (0.1 / tau_total).min(0.02);
    let steps = (w_max / dw).ceil().max(1.0) as usize;
    let total: f64 = (0..steps)
        .into_par_iter()
        .map(|k| {
            let w0 = w_max * k as f64 / steps as f64;
            let w1 = w_max * (k + 1) as f64 / steps as f64;
            arg_change(ctx, w0, ctx.ratio(w0), w1, ctx.ratio(w1), 0)
        })
        .sum();
    let tail = -ctx.ratio(w_max).arg();
    -(total + tail) / std::f64::consts::PI
}

/// Number of characteristic roots with positive real part, counting
/// conjugate pairs as two.
pub fn count_unstable(ctx: &CharacteristicContext) -> usize {
    unstable_index(ctx).round().max(0.0) as usize
}

/// Eigenvector normalized to `𝓔_M = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvector {
    pub components: [Complex64; 3],
    /// Set when back-substitution broke down and the null vector came from row cross products.
    pub pivot_fallback: bool,
}

fn matrix(ctx: &CharacteristicContext, l: Complex64) -> [[Complex64; 3]; 3] {
    let p = &ctx.params;
    let z = Complex64::new(0.0, 0.0);
    [
        [-(l + p.gbar_m), z, ctx.a13(l)],
        [ctx.a21(l), -(l + p.gbar_i), z],
        [z, Complex64::new(p.beta_e, 0.0), -(l + p.gbar_e)],
    ]
}

fn cross(a: &[Complex64; 3], b: &[Complex64; 3]) -> [Complex64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `‖A(λ) 𝓔‖ / ‖A(λ)‖` (max-row norms).
pub fn eigen_residual(ctx: &CharacteristicContext, lambda: Complex64, v: &[Complex64; 3]) -> f64 {
    let a = matrix(ctx, lambda);
    let mut res: f64 = 0.0;
    let mut norm: f64 = 0.0;
    for row in &a {
        res = res.max((row[0] * v[0] + row[1] * v[1] + row[2] * v[2]).norm());
        norm = norm.max(row.iter().map(|c| c.norm()).sum());
    }
    let vn = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    res / (norm * vn)
}

pub fn eigenvector(ctx: &CharacteristicContext, lambda: Complex64) -> Result<Eigenvector> {
    let p = &ctx.params;
    let (di, de) = (lambda + p.gbar_i, lambda + p.gbar_e);
    let tiny = 1e-12 * (1.0 + lambda.norm());
    if di.norm() > tiny && de.norm() > tiny {
        let ei = ctx.a21(lambda) / di;
        let ee = p.beta_e * ei / de;
        return Ok(Eigenvector {
            components: [Complex64::new(1.0, 0.0), ei, ee],
            pivot_fallback: false,
        });
    }
    let a = matrix(ctx, lambda);
    let best = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(i, j)| cross(&a[i], &a[j]))
        .max_by(|x, y| {
            let nx: f64 = x.iter().map(|c| c.norm()).sum();
            let ny: f64 = y.iter().map(|c| c.norm()).sum();
            nx.total_cmp(&ny)
        })
        .unwrap();
    let pivot = if best[0].norm() > tiny {
        best[0]
    } else {
        *best
            .iter()
            .max_by(|x, y| x.norm().total_cmp(&y.norm()))
            .unwrap()
    };
    if pivot.norm() == 0.0 {
        return Err(OperonError::Pivot(format!("{lambda}")));
    }
    Ok(Eigenvector {
        components: best.map(|c| c / pivot),
        pivot_fallback: true,
    })
}

/// Leading stable real root and complex pair; `three_dl` is set when the
/// pair is closer to the imaginary axis. `None` fields mean the region held
/// no such root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeadingOrder {
    pub real_leading: Option<f64>,
    pub complex_leading: Option<Complex64>,
    pub three_dl: Option<bool>,
}

impl LeadingOrder {
    pub fn insufficient_region(&self) -> bool {
        self.three_dl.is_none()
    }
}

pub fn leading_order_report(
    ctx: &CharacteristicContext,
    region: &Region,
    seeds: &SeedGrid,
) -> LeadingOrder {
    let roots = find_roots(ctx, region, seeds);
    let stable = roots.iter().map(|r| r.lambda).filter(|l| l.re < 0.0);
    let real_leading = stable
        .clone()
        .filter(|l| l.im == 0.0)
        .map(|l| l.re)
        .reduce(f64::max);
    let complex_leading = stable
        .filter(|l| l.im > 0.0)
        .reduce(|a, b| if b.re > a.re { b } else { a });
    let three_dl = match (real_leading, complex_leading) {
        (Some(r), Some(c)) => Some(c.re > r),
        _ => None,
    };
    LeadingOrder {
        real_leading,
        complex_leading,
        three_dl,
    }
}
