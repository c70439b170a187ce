//! File formats: reproducibility headers and CSV tables that read back
//! into the library types. Numbers are written with 17 significant digits.

use std::fmt::Write as _;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::continuation::{BifurcationEvent, EventKind};
use crate::equilibria::SteadyState;
use crate::error::{OperonError, Result};
use crate::model::StateVector;
use crate::simulate::SimulationResult;
use crate::spectrum::CharacteristicRoot;

/// Leading `#` lines of every output file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHeader {
    pub command: String,
    pub config_hash: String,
    pub tolerances: Vec<(String, f64)>,
}

impl RunHeader {
    pub fn new(command: &str, config_json: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(config_json),
            tolerances: Vec::new(),
        }
    }

    pub fn tolerance(mut self, name: &str, value: f64) -> Self {
        self.tolerances.push((name.to_string(), value));
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "# operon {} {}\n# config-sha256 {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.config_hash
        );
        if !self.tolerances.is_empty() {
            let tol: Vec<String> = self
                .tolerances
                .iter()
                .map(|(k, v)| format!("{k}={v:e}"))
                .collect();
            let _ = writeln!(out, "# tolerances {}", tol.join(" "));
        }
        out
    }
}

pub fn config_hash(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Data rows of a CSV body: comments and the header line dropped.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|(k, l)| (k + 1, l.split(',').map(str::trim).collect()))
}

fn field<T: std::str::FromStr>(cols: &[&str], k: usize, line: usize) -> Result<T> {
    cols.get(k)
        .ok_or_else(|| OperonError::Parse(format!("line {line}: missing column {}", k + 1)))?
        .parse()
        .map_err(|_| OperonError::Parse(format!("line {line}: bad value in column {}", k + 1)))
}

pub fn steady_states_csv(states: &[SteadyState]) -> String {
    let mut out = String::from("E,M,I,tauM,tauI,ge_slope,unstable,tangent\n");
    for s in states {
        let count = s.unstable_count.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{count},{}",
            num(s.e_star),
            num(s.m_star),
            num(s.i_star),
            num(s.tau_m_star),
            num(s.tau_i_star),
            num(s.ge_slope),
            s.tangent
        );
    }
    out
}

pub fn parse_steady_states_csv(text: &str) -> Result<Vec<SteadyState>> {
    rows(text)
        .map(|(line, c)| {
            Ok(SteadyState {
                e_star: field(&c, 0, line)?,
                m_star: field(&c, 1, line)?,
                i_star: field(&c, 2, line)?,
                tau_m_star: field(&c, 3, line)?,
                tau_i_star: field(&c, 4, line)?,
                ge_slope: field(&c, 5, line)?,
                unstable_count: if c.get(6).is_some_and(|v| !v.is_empty()) {
                    Some(field(&c, 6, line)?)
                } else {
                    None
                },
                tangent: field(&c, 7, line)?,
            })
        })
        .collect()
}

/// Roots of several steady states: `state,re,im,residual,multiplicity`.
pub fn roots_csv(roots: &[(usize, CharacteristicRoot)]) -> String {
    let mut out = String::from("state,re,im,residual,multiplicity\n");
    for (k, r) in roots {
        let _ = writeln!(
            out,
            "{k},{},{},{},{}",
            num(r.lambda.re),
            num(r.lambda.im),
            num(r.residual),
            r.multiplicity_hint
        );
    }
    out
}

pub fn parse_roots_csv(text: &str) -> Result<Vec<(usize, CharacteristicRoot)>> {
    rows(text)
        .map(|(line, c)| {
            let root = CharacteristicRoot {
                lambda: Complex64::new(field(&c, 1, line)?, field(&c, 2, line)?),
                residual: field(&c, 3, line)?,
                multiplicity_hint: field(&c, 4, line)?,
            };
            Ok((field(&c, 0, line)?, root))
        })
        .collect()
}

/// A trajectory row: time, state and delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: StateVector,
    pub tau_m: f64,
    pub tau_i: Option<f64>,
}

/// Computed part of a run: `t,M,I,E,tauM[,tauI]`.
pub fn trajectory_csv(result: &SimulationResult) -> String {
    let two = result.params.translation_delay_is_state_dependent();
    let mut out = String::from(if two {
        "t,M,I,E,tauM,tauI\n"
    } else {
        "t,M,I,E,tauM\n"
    });
    let traj = &result.trajectory;
    let first = traj.t.iter().rposition(|&t| t == result.t0).unwrap_or(0);
    for (k, &t) in traj.t.iter().enumerate().skip(first) {
        let x = traj.x[k];
        let d = k - first;
        let _ = write!(
            out,
            "{},{},{},{},{}",
            num(t),
            num(x.m),
            num(x.i),
            num(x.e),
            num(result.delays.tau_m[d])
        );
        if two {
            let _ = write!(out, ",{}", num(result.delays.tau_i[d]));
        }
        out.push('\n');
    }
    out
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    rows(text)
        .map(|(line, c)| {
            Ok(TrajectoryRow {
                t: field(&c, 0, line)?,
                x: StateVector::new(
                    field(&c, 1, line)?,
                    field(&c, 2, line)?,
                    field(&c, 3, line)?,
                ),
                tau_m: field(&c, 4, line)?,
                tau_i: if c.len() > 5 {
                    Some(field(&c, 5, line)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

pub fn parse_events_csv(text: &str) -> Result<Vec<BifurcationEvent>> {
    rows(text)
        .map(|(line, c)| {
            let kind = match c.first().copied() {
                Some("Fold") => EventKind::Fold,
                Some("Hopf") => EventKind::Hopf,
                other => {
                    return Err(OperonError::Parse(format!(
                        "line {line}: unknown event type {other:?}"
                    )))
                }
            };
            let period: Option<f64> = if c.get(3).is_some_and(|v| !v.is_empty()) {
                Some(field(&c, 3, line)?)
            } else {
                None
            };
            Ok(BifurcationEvent {
                kind,
                param: field(&c, 1, line)?,
                e_star: field(&c, 2, line)?,
                omega: period.map(|p| 2.0 * std::f64::consts::PI / p),
                period,
                from: field(&c, 4, line)?,
                to: field(&c, 5, line)?,
            })
        })
        .collect()
}

/// History samples `t,M,I,E` (a header line is optional).
pub fn parse_history_csv(text: &str) -> Result<(Vec<f64>, Vec<StateVector>)> {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (k, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let c: Vec<&str> = l.split(',').map(str::trim).collect();
        ts.push(field(&c, 0, k + 1)?);
        xs.push(StateVector::new(
            field(&c, 1, k + 1)?,
            field(&c, 2, k + 1)?,
            field(&c, 3, k + 1)?,
        ));
    }
    Ok((ts, xs))
}

/// `(t, value)` pairs for single-variable histories.
pub fn parse_series_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (k, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let c: Vec<&str> = l.split(',').map(str::trim).collect();
        out.push((field(&c, 0, k + 1)?, field(&c, 1, k + 1)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_round_trip() {
        let s = SteadyState {
            m_star: 0.1 + 0.2,
            i_star: 1.0 / 3.0,
            e_star: std::f64::consts::PI,
            tau_m_star: 1e-300,
            tau_i_star: 12345.678901234567,
            ge_slope: -0.0,
            unstable_count: Some(3),
            tangent: false,
        };
        let u = SteadyState {
            unstable_count: None,
            tangent: true,
            ..s
        };
        let text = format!("# header\n{}", steady_states_csv(&[s, u]));
        assert_eq!(parse_steady_states_csv(&text).unwrap(), vec![s, u]);
    }

    #[test]
    fn events_round_trip() {
        let ev = BifurcationEvent {
            kind: EventKind::Fold,
            param: 0.017416,
            e_star: 0.1109,
            omega: None,
            period: None,
            from: 0,
            to: 1,
        };
        let back = parse_events_csv(&crate::continuation::events_csv(&[ev])).unwrap();
        assert_eq!(back, vec![ev]);
    }

    #[test]
    fn roots_round_trip() {
        let r = CharacteristicRoot {
            lambda: Complex64::new(0.490_51, -1.0 / 7.0),
            residual: 3.2e-15,
            multiplicity_hint: 1,
        };
        let rows = vec![
            (0, r),
            (
                2,
                CharacteristicRoot {
                    multiplicity_hint: 2,
                    ..r
                },
            ),
        ];
        assert_eq!(parse_roots_csv(&roots_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn bad_number_names_the_line() {
        let err = parse_steady_states_csv("E,M\n1.0,abc,1,1,1,1,,false\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash("{}"), config_hash("{}"));
        assert_ne!(config_hash("{}"), config_hash("{ }"));
        assert_eq!(config_hash("").len(), 64);
    }
}
