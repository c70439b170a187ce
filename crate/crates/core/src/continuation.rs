//! One-parameter continuation of steady states on the zero set of
//! `G(p, E) = g_E(E; p)`, with fold and Hopf detection from changes in the
//! unstable root count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{
    find_steady_states, g_e, EquilibriumProfile, SteadyState, SteadyStateOptions,
};
use crate::error::{OperonError, Result};
use crate::model::{OperonParameters, Validation};
use crate::simulate::OrbitSweep;
use crate::spectrum::{count_unstable, find_roots, CharacteristicContext, Region, SeedGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub param: f64,
    pub steady: SteadyState,
    pub unstable_count: usize,
    /// Unit tangent `(dp/ds, dE/ds)` in the direction of travel.
    pub tangent: (f64, f64),
}

impl BranchPoint {
    pub fn e(&self) -> f64 {
        self.steady.e_star
    }

    pub fn is_stable(&self) -> bool {
        self.unstable_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BranchStatus {
    /// Left the requested parameter range.
    RangeExit,
    MaxPoints,
    /// Corrector failed at the minimum step.
    Terminated(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub param_name: String,
    pub points: Vec<BranchPoint>,
    pub status: BranchStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    /// Successful steps before the step grows by `growth`.
    pub grow_after: usize,
    pub growth: f64,
    /// Arclength below which event bisection stops.
    pub event_tolerance: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            min_step: 1e-4,
            max_step: 5e-2,
            max_points: 20_000,
            grow_after: 4,
            growth: 1.3,
            event_tolerance: 1e-10,
        }
    }
}

/// `g_E` viewed as a function of `(p, E)`.
struct Surface<'a> {
    params: &'a OperonParameters,
    name: &'a str,
}

impl Surface<'_> {
    fn at(&self, p: f64) -> Result<OperonParameters> {
        self.params.with(self.name, p)
    }

    fn g(&self, p: f64, e: f64) -> Result<f64> {
        g_e(&self.at(p)?, e)
    }

    /// `(G, G_p, G_E)`; `G_p` by central differences.
    fn jet(&self, p: f64, e: f64) -> Result<(f64, f64, f64)> {
        let here = self.at(p)?;
        let prof = EquilibriumProfile::new(&here, e)?;
        let h = 1e-6 * (1.0 + p.abs());
        let gp = (self.g(p + h, e)? - self.g(p - h, e)?) / (2.0 * h);
        Ok((prof.g(&here), gp, prof.slope(&here)))
    }

    /// Newton on `{G = 0, d·(x - x0) = 0}`.
    fn correct(&self, x0: (f64, f64), d: (f64, f64)) -> Result<(f64, f64)> {
        let (mut p, mut e) = x0;
        for _ in 0..20 {
            let (g, gp, ge) = self.jet(p, e)?;
            let c = d.0 * (p - x0.0) + d.1 * (e - x0.1);
            let det = gp * d.1 - ge * d.0;
            if det == 0.0 || !det.is_finite() {
                return Err(OperonError::Pivot(format!(
                    "singular corrector at p = {p}, E = {e}"
                )));
            }
            let dp = (-g * d.1 + ge * c) / det;
            let de = (-gp * c + g * d.0) / det;
            p += dp;
            e += de;
            if dp.abs().max(de.abs()) < 1e-13 * (1.0 + e.abs() + p.abs()) {
                let g = self.g(p, e)?;
                if g.abs() <= 1e-10 * (1.0 + e.abs()) {
                    return Ok((p, e));
                }
            }
        }
        Err(OperonError::Evaluation(format!(
            "corrector did not converge near p = {}, E = {}",
            x0.0, x0.1
        )))
    }

    fn tangent(&self, p: f64, e: f64, orient: (f64, f64)) -> Result<(f64, f64)> {
        let (_, gp, ge) = self.jet(p, e)?;
        let norm = gp.hypot(ge);
        if norm == 0.0 {
            return Err(OperonError::Pivot(format!(
                "singular point at p = {p}, E = {e}"
            )));
        }
        let t = (ge / norm, -gp / norm);
        Ok(if t.0 * orient.0 + t.1 * orient.1 < 0.0 {
            (-t.0, -t.1)
        } else {
            t
        })
    }

    fn point(&self, p: f64, e: f64, tangent: (f64, f64)) -> Result<BranchPoint> {
        let here = self.at(p)?;
        let steady = SteadyState::at(&here, e)?;
        let ctx = CharacteristicContext::new(&here, &steady)?;
        let count = count_unstable(&ctx);
        Ok(BranchPoint {
            param: p,
            steady: SteadyState {
                unstable_count: Some(count),
                ..steady
            },
            unstable_count: count,
            tangent,
        })
    }
}

/// Branch point at `(p, E)` after correcting `E` at fixed `p`; the tangent
/// is oriented so that `p` moves in the direction of `sign(direction)`.
pub fn start_point(
    params: &OperonParameters,
    param_name: &str,
    p: f64,
    e_guess: f64,
    direction: f64,
) -> Result<BranchPoint> {
    let s = Surface {
        params,
        name: param_name,
    };
    let (p, e) = s.correct((p, e_guess), (1.0, 0.0))?;
    let t = s.tangent(p, e, (direction.signum(), 0.0))?;
    s.point(p, e, t)
}

/// Pseudo-arclength continuation from `start` until the parameter leaves
/// `range` (inclusive), `E` turns negative or `max_points` is reached.
pub fn trace_branch(
    params: &OperonParameters,
    param_name: &str,
    start: &BranchPoint,
    range: (f64, f64),
    options: &ContinuationOptions,
) -> Result<Branch> {
    params.validate(Validation::Relaxed)?;
    params.get(param_name)?;
    if !(range.0 < range.1) {
        return Err(OperonError::Validation(format!(
            "degenerate range [{}, {}]",
            range.0, range.1
        )));
    }
    let s = Surface {
        params,
        name: param_name,
    };
    let mut points = vec![*start];
    let mut ds = options.step;
    let mut streak = 0;
    let status = loop {
        if points.len() >= options.max_points {
            break BranchStatus::MaxPoints;
        }
        let last = points.last().unwrap();
        let (p0, e0, t0) = (last.param, last.e(), last.tangent);
        let pred = (p0 + ds * t0.0, e0 + ds * t0.1);
        let corrected = s.correct(pred, t0).and_then(|(p, e)| {
            let dist = (p - p0).hypot(e - e0);
            if dist > 2.0 * ds || dist < 0.25 * ds || e < 0.0 {
                return Err(OperonError::Evaluation("corrector left the step".into()));
            }
            let t = s.tangent(p, e, t0)?;
            // a sharp turn means the corrector jumped branches
            if t.0 * t0.0 + t.1 * t0.1 < 0.5 {
                return Err(OperonError::Evaluation("tangent turned too far".into()));
            }
            s.point(p, e, t)
        });
        match corrected {
            Ok(pt) => {
                let out = pt.param < range.0 || pt.param > range.1;
                if !out {
                    points.push(pt);
                }
                if out {
                    break BranchStatus::RangeExit;
                }
                streak += 1;
                if streak >= options.grow_after {
                    ds = (ds * options.growth).min(options.max_step);
                    streak = 0;
                }
            }
            Err(e) => {
                streak = 0;
                if ds <= options.min_step * (1.0 + 1e-12) {
                    break BranchStatus::Terminated(e.to_string());
                }
                ds = (0.5 * ds).max(options.min_step);
            }
        }
    };
    Ok(Branch {
        param_name: param_name.to_string(),
        points,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Fold,
    Hopf,
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Fold => "Fold",
            EventKind::Hopf => "Hopf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub param: f64,
    pub e_star: f64,
    /// Crossing frequency ω (Hopf only).
    pub omega: Option<f64>,
    /// `2π/ω` (Hopf only).
    pub period: Option<f64>,
    pub from: usize,
    pub to: usize,
}

fn slope_sign(pt: &BranchPoint) -> bool {
    pt.steady.ge_slope > 0.0
}

/// Crossing pair at a Hopf point: the complex root nearest the imaginary axis.
fn hopf_frequency(params: &OperonParameters, steady: &SteadyState) -> Result<Option<f64>> {
    let ctx = CharacteristicContext::new(params, steady)?;
    let region = Region {
        re_lo: -0.5,
        re_hi: 0.5,
        ..Region::default()
    };
    let roots = find_roots(&ctx, &region, &SeedGrid::default());
    let best = roots
        .iter()
        .filter(|r| r.lambda.im > 1e-6)
        .min_by(|a, b| a.lambda.re.abs().total_cmp(&b.lambda.re.abs()))
        .map(|r| r.lambda);
    Ok(best.map(|l: Complex64| l.im))
}

fn refine(
    s: &Surface,
    a: BranchPoint,
    b: BranchPoint,
    tol: f64,
    out: &mut Vec<(BranchPoint, BranchPoint)>,
) -> Result<()> {
    if a.unstable_count == b.unstable_count && slope_sign(&a) == slope_sign(&b) {
        return Ok(());
    }
    let chord = (b.param - a.param, b.e() - a.e());
    let len = chord.0.hypot(chord.1);
    if len <= tol {
        out.push((a, b));
        return Ok(());
    }
    let d = (chord.0 / len, chord.1 / len);
    let mid = (a.param + 0.5 * chord.0, a.e() + 0.5 * chord.1);
    let (p, e) = s.correct(mid, d)?;
    let t = s.tangent(p, e, a.tangent)?;
    let m = s.point(p, e, t)?;
    refine(s, a, m, tol, out)?;
    refine(s, m, b, tol, out)
}

/// Events between consecutive branch points, each bisected down to
/// `options.event_tolerance` in arclength.
pub fn detect_events(
    params: &OperonParameters,
    branch: &Branch,
    options: &ContinuationOptions,
) -> Result<Vec<BifurcationEvent>> {
    let s = Surface {
        params,
        name: &branch.param_name,
    };
    let segments: Vec<(usize, Vec<(BranchPoint, BranchPoint)>)> = branch
        .points
        .par_windows(2)
        .enumerate()
        .map(|(k, w)| {
            let mut leaves = Vec::new();
            refine(&s, w[0], w[1], options.event_tolerance, &mut leaves)?;
            Ok((k, leaves))
        })
        .collect::<Result<_>>()?;
    let mut events = Vec::new();
    for (_, leaves) in segments {
        for (a, b) in leaves {
            let p = 0.5 * (a.param + b.param);
            let e = 0.5 * (a.e() + b.e());
            let here = s.at(p)?;
            let fold = slope_sign(&a) != slope_sign(&b);
            let kind = if fold {
                EventKind::Fold
            } else {
                EventKind::Hopf
            };
            let omega = match kind {
                EventKind::Hopf => hopf_frequency(&here, &SteadyState::at(&here, e)?)?,
                EventKind::Fold => None,
            };
            events.push(BifurcationEvent {
                kind,
                param: p,
                e_star: e,
                omega,
                period: omega.map(|w| 2.0 * PI / w),
                from: a.unstable_count,
                to: b.unstable_count,
            });
        }
    }
    Ok(events)
}

/// Fixed-width plain-text table, one row per event.
pub fn bifurcation_table(events: &[BifurcationEvent], param_name: &str) -> String {
    let mut out = format!(
        "{:<6} {:>14} {:>12} {:>10} {:>10}\n",
        "type", param_name, "period", "unstable", "E*"
    );
    for ev in events {
        let period = ev
            .period
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<6} {:>14.6} {:>12} {:>10} {:>10.4}",
            ev.kind.label(),
            ev.param,
            period,
            format!("{}->{}", ev.from, ev.to),
            ev.e_star
        );
    }
    out
}

/// Event rows as CSV: `type,param,E,period,from,to`.
pub fn events_csv(events: &[BifurcationEvent]) -> String {
    let mut out = String::from("type,param,E,period,from,to\n");
    for ev in events {
        let period = ev.period.map(|p| format!("{p:.16e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{},{},{}",
            ev.kind.label(),
            ev.param,
            ev.e_star,
            period,
            ev.from,
            ev.to
        );
    }
    out
}

/// Branch points as CSV.
pub fn branch_csv(branches: &[Branch]) -> String {
    let mut out = String::from("branch,param,E,M,I,tauM,tauI,unstable\n");
    for (k, b) in branches.iter().enumerate() {
        for pt in &b.points {
            let s = &pt.steady;
            let _ = writeln!(
                out,
                "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                pt.param,
                s.e_star,
                s.m_star,
                s.i_star,
                s.tau_m_star,
                s.tau_i_star,
                pt.unstable_count
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramOptions {
    /// Parameter values at which steady states seed branches.
    pub seeds: usize,
    pub continuation: ContinuationOptions,
}

impl Default for DiagramOptions {
    fn default() -> Self {
        Self {
            seeds: 5,
            continuation: ContinuationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagram {
    pub param_name: String,
    pub range: (f64, f64),
    pub branches: Vec<Branch>,
    pub events: Vec<BifurcationEvent>,
    pub orbits: Vec<OrbitSweep>,
}

fn on_branch(branches: &[Branch], p: f64, e: f64, tol: f64) -> bool {
    branches.iter().any(|b| {
        b.points.windows(2).any(|w| {
            let (a, c) = (&w[0], &w[1]);
            let (dx, dy) = (c.param - a.param, c.e() - a.e());
            let len2 = dx * dx + dy * dy;
            let s = if len2 > 0.0 {
                (((p - a.param) * dx + (e - a.e()) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (a.param + s * dx - p).hypot(a.e() + s * dy - e) < tol
        })
    })
}

/// Traces every steady-state branch met at `options.seeds` parameter values
/// across `range`, then collects their events.
pub fn diagram(
    params: &OperonParameters,
    param_name: &str,
    range: (f64, f64),
    options: &DiagramOptions,
) -> Result<Diagram> {
    let copts = &options.continuation;
    let n = options.seeds.max(1);
    let mut branches: Vec<Branch> = Vec::new();
    for k in 0..n {
        let p = if n == 1 {
            0.5 * (range.0 + range.1)
        } else {
            range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64
        };
        let here = params.with(param_name, p)?;
        let Ok(states) = find_steady_states(&here, &SteadyStateOptions::default()) else {
            continue;
        };
        for st in states {
            if on_branch(&branches, p, st.e_star, 10.0 * copts.max_step) {
                continue;
            }
            let mut halves = Vec::new();
            for dir in [-1.0, 1.0] {
                let start = start_point(params, param_name, p, st.e_star, dir)?;
                halves.push(trace_branch(params, param_name, &start, range, copts)?);
            }
            let back = halves.remove(0);
            let fwd = halves.remove(0);
            // join into one branch running in the direction of increasing p at the seed
            let mut points: Vec<BranchPoint> = back
                .points
                .iter()
                .rev()
                .map(|pt| BranchPoint {
                    tangent: (-pt.tangent.0, -pt.tangent.1),
                    ..*pt
                })
                .collect();
            points.extend_from_slice(&fwd.points[1..]);
            branches.push(Branch {
                param_name: param_name.to_string(),
                points,
                status: fwd.status,
            });
        }
    }
    let mut events = Vec::new();
    for b in &branches {
        for ev in detect_events(params, b, copts)? {
            let dup = events.iter().any(|x: &BifurcationEvent| {
                x.kind == ev.kind
                    && (x.param - ev.param).abs() < 1e-6
                    && (x.e_star - ev.e_star).abs() < 1e-6
            });
            if !dup {
                events.push(ev);
            }
        }
    }
    events.sort_by(|a, b| a.param.total_cmp(&b.param));
    Ok(Diagram {
        param_name: param_name.to_string(),
        range,
        branches,
        events,
        orbits: Vec::new(),
    })
}

const STABLE_COLOR: &str = "#1a9850";
const UNSTABLE_COLORS: [&str; 3] = ["#000000", "#808080", "#c0c0c0"];

fn style(count: usize) -> (&'static str, &'static str) {
    match count {
        0 => (STABLE_COLOR, ""),
        k => (UNSTABLE_COLORS[(k - 1).min(2)], " stroke-dasharray=\"6,4\""),
    }
}

/// SVG 1.1 rendering on a 960×640 canvas: stable segments solid green,
/// unstable ones dashed in gray levels by unstable count, folds as squares,
/// Hopf points as circles, orbit max/min as blue dots.
pub fn diagram_svg(d: &Diagram) -> String {
    let (w, h, margin) = (960.0, 640.0, 70.0);
    let (x0, x1) = d.range;
    let mut e_hi = 0.0f64;
    for b in &d.branches {
        for pt in &b.points {
            e_hi = e_hi.max(pt.e());
        }
    }
    for sweep in &d.orbits {
        for pt in &sweep.points {
            e_hi = e_hi.max(pt.orbit.max.e);
        }
    }
    let e_hi = if e_hi > 0.0 { 1.05 * e_hi } else { 1.0 };
    let sx = |p: f64| margin + (p - x0) / (x1 - x0) * (w - 2.0 * margin);
    let sy = |e: f64| h - margin - e / e_hi * (h - 2.0 * margin);
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<path d=\"M{m},{m} L{m},{b} L{r},{b}\" fill=\"none\" stroke=\"black\"/>",
        m = margin,
        b = h - margin,
        r = w - margin
    );
    for k in 0..=4 {
        let p = x0 + (x1 - x0) * k as f64 / 4.0;
        let e = e_hi * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{p:.4}</text>",
            sx(p),
            h - margin + 18.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\">{e:.3}</text>",
            margin - 6.0,
            sy(e) + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        w / 2.0,
        h - 20.0,
        d.param_name
    );
    let _ = writeln!(out, "<text x=\"20\" y=\"{:.1}\" font-size=\"14\" transform=\"rotate(-90 20 {:.1})\" text-anchor=\"middle\">E</text>", h / 2.0, h / 2.0);
    for b in &d.branches {
        let mut k = 0;
        while k + 1 < b.points.len() {
            let count = b.points[k].unstable_count;
            let mut j = k + 1;
            while j + 1 < b.points.len() && b.points[j].unstable_count == count {
                j += 1;
            }
            let (color, dash) = style(count);
            let pts: Vec<String> = b.points[k..=j]
                .iter()
                .map(|pt| format!("{:.2},{:.2}", sx(pt.param), sy(pt.e())))
                .collect();
            let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>", pts.join(" "));
            k = j;
        }
    }
    for sweep in &d.orbits {
        for pt in &sweep.points {
            for e in [pt.orbit.max.e, pt.orbit.min.e] {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"#2166ac\"/>",
                    sx(pt.value),
                    sy(e)
                );
            }
        }
    }
    for ev in &d.events {
        let (x, y) = (sx(ev.param), sy(ev.e_star));
        match ev.kind {
            EventKind::Fold => {
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"#d73027\"/>",
                    x - 4.0,
                    y - 4.0
                );
            }
            EventKind::Hopf => {
                let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"#d73027\" stroke-width=\"2\"/>");
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn branch_points_satisfy_equilibrium() {
        let p = fixtures::load("repressible_table3").unwrap();
        let start = start_point(&p, "vM_min", 0.03, 0.909, -1.0).unwrap();
        let opts = ContinuationOptions::default();
        let b = trace_branch(&p, "vM_min", &start, (0.02, 0.05), &opts).unwrap();
        assert!(b.points.len() > 5);
        for pt in &b.points {
            let g = g_e(&p.with("vM_min", pt.param).unwrap(), pt.e()).unwrap();
            assert!(g.abs() < 1e-9, "{g}");
        }
        assert_eq!(b.status, BranchStatus::RangeExit);
    }

    #[test]
    fn lower_branch_turns_at_fold() {
        let p = fixtures::load("repressible_table3").unwrap();
        let start = start_point(&p, "vM_min", 0.01, 0.009, 1.0).unwrap();
        let b = trace_branch(
            &p,
            "vM_min",
            &start,
            (0.005, 0.03),
            &ContinuationOptions::default(),
        )
        .unwrap();
        let turns: Vec<f64> = b
            .points
            .windows(2)
            .filter(|w| (w[0].tangent.0 > 0.0) != (w[1].tangent.0 > 0.0))
            .map(|w| w[1].param)
            .collect();
        assert_eq!(turns.len(), 1);
        assert!((turns[0] - 0.0174).abs() < 2e-4);
        // comes back along the middle branch
        let last = b.points.last().unwrap();
        assert_eq!(b.status, BranchStatus::RangeExit);
        assert!(
            last.param < 0.01 && last.tangent.0 < 0.0 && last.e() > 0.2 && last.e() < 0.25,
            "{last:?}"
        );
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = bifurcation_table(&[], "vM_min");
        assert_eq!(t.lines().count(), 1);
        assert_eq!(events_csv(&[]).lines().count(), 1);
    }

    #[test]
    fn bad_range_rejected() {
        let p = fixtures::load("repressible_table3").unwrap();
        let start = start_point(&p, "vM_min", 0.03, 0.909, -1.0).unwrap();
        assert!(trace_branch(
            &p,
            "vM_min",
            &start,
            (0.05, 0.02),
            &ContinuationOptions::default()
        )
        .is_err());
        assert!(matches!(
            start_point(&p, "nope", 0.03, 0.9, 1.0),
            Err(OperonError::UnknownParameter(_))
        ));
    }
}
