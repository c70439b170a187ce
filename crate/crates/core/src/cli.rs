//! Command-line front end. A run is described by a JSON [`RunConfig`];
//! flags given on the command line override the matching config keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::continuation::{self, ContinuationOptions, DiagramOptions};
use crate::equilibria::{find_steady_states, SteadyStateOptions};
use crate::error::{OperonError, Result};
use crate::fixtures;
use crate::model::{OperonParameters, StateVector, Validation};
use crate::output::{self, RunHeader};
use crate::quadrature;
use crate::simulate::{
    self, extract_orbit, required_window, HistorySegment, OrbitOptions, OrbitSweepOptions,
    SimulationOptions,
};
use crate::spectrum::{self, CharacteristicContext, Region, SeedGrid};
use crate::threshold::{self, DiscretizationGrid, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub param: f64,
    #[serde(rename = "E")]
    pub e: f64,
    /// Sign of the initial parameter direction.
    pub direction: f64,
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<OperonParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default)]
    pub stability: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Positive tolerances, non-degenerate ranges.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("atol", self.atol),
            ("rtol", self.rtol),
            ("max_step", self.max_step),
            ("orbit_tolerance", self.orbit_tolerance),
            ("duration", self.duration),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(OperonError::Validation(format!(
                        "{name} must be positive, got {v}"
                    )));
                }
            }
        }
        if let Some(t) = self.transient {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(OperonError::Validation(format!(
                    "transient must be non-negative, got {t}"
                )));
            }
        }
        if let Some((a, b)) = self.range {
            if !(a < b && a.is_finite() && b.is_finite()) {
                return Err(OperonError::Validation(format!(
                    "degenerate range [{a}, {b}]"
                )));
            }
        }
        if let Some(r) = self.region {
            if !(r.re_lo < r.re_hi && r.im_hi > 0.0) {
                return Err(OperonError::Validation("empty spectral region".into()));
            }
        }
        if let Some(s) = self.start {
            if s.direction == 0.0 || !s.direction.is_finite() {
                return Err(OperonError::Validation(
                    "start direction must be nonzero".into(),
                ));
            }
        }
        if self.n == Some(0) || self.seeds == Some(0) || self.jobs == Some(0) {
            return Err(OperonError::Validation(
                "n, seeds and jobs must be at least 1".into(),
            ));
        }
        let sources = [
            self.fixture.is_some(),
            self.parameters.is_some(),
            self.parameters_file.is_some(),
        ];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(OperonError::Validation(
                "give exactly one of fixture, parameters, parameters_file".into(),
            ));
        }
        Ok(())
    }

    /// Parameter set after loading and applying overrides. The result is
    /// checked in strict mode when `strict` is set, relaxed mode otherwise.
    pub fn resolve_parameters(&self) -> Result<OperonParameters> {
        let mut params = if let Some(name) = &self.fixture {
            fixtures::load(name)?
        } else if let Some(p) = &self.parameters {
            p.clone()
        } else if let Some(path) = &self.parameters_file {
            let text = fs::read_to_string(path)?;
            // accept both a bare parameter object and a fixture file
            match serde_json::from_str::<fixtures::Fixture>(&text) {
                Ok(f) => f.parameters,
                Err(_) => OperonParameters::from_json(&text)?,
            }
        } else {
            return Err(OperonError::Validation(
                "no parameters: set fixture, parameters or parameters_file".into(),
            ));
        };
        for (name, value) in &self.overrides {
            params.set(name, *value)?;
        }
        params.validate(if self.strict {
            Validation::Strict
        } else {
            Validation::Relaxed
        })?;
        Ok(params)
    }

    fn simulation_options(&self) -> SimulationOptions {
        let d = SimulationOptions::default();
        SimulationOptions {
            atol: self.atol.unwrap_or(d.atol),
            rtol: self.rtol.unwrap_or(d.rtol),
            max_step: self.max_step.unwrap_or(d.max_step),
            ..d
        }
    }

    fn orbit_options(&self) -> OrbitOptions {
        let d = OrbitOptions::default();
        OrbitOptions {
            transient: self.transient.unwrap_or(d.transient),
            tolerance: self.orbit_tolerance.unwrap_or(d.tolerance),
            ..d
        }
    }

    fn require_param(&self) -> Result<&str> {
        self.param
            .as_deref()
            .ok_or_else(|| OperonError::Validation("missing `param`".into()))
    }

    fn require_range(&self) -> Result<(f64, f64)> {
        self.range
            .ok_or_else(|| OperonError::Validation("missing `range`".into()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "operon",
    version,
    about = "Goodwin operon model with threshold-type state-dependent delays"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Named parameter set (see `operon fixtures`).
    #[arg(long)]
    pub fixture: Option<String>,
    /// Parameter file (bare parameters or a fixture file).
    #[arg(long)]
    pub parameters: Option<PathBuf>,
    /// Override one parameter, e.g. `--set vM_min=0.02`. Repeatable.
    #[arg(long = "set", value_parser = parse_assignment)]
    pub overrides: Vec<(String, f64)>,
    /// Require strict-mode parameters.
    #[arg(long)]
    pub strict: bool,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps and seed grids.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulationArgs {
    /// `const:M,I,E` or a CSV file of `t,M,I,E` samples.
    #[arg(long)]
    pub history: Option<String>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct BranchArgs {
    /// Continuation parameter name, e.g. `vM_min`.
    #[arg(long)]
    pub param: Option<String>,
    /// Parameter interval `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    pub range: Option<(f64, f64)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady states by scanning g_E.
    SteadyStates {
        #[command(flatten)]
        common: Common,
        /// Fill the unstable-root count of each state.
        #[arg(long)]
        stability: bool,
    },
    /// Characteristic roots at every steady state.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Integrate from a history and write the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimulationArgs,
    },
    /// Simulate, then measure the periodic orbit reached; with `--param` and
    /// `--values`, follow it through a parameter sweep.
    Orbit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimulationArgs,
        #[arg(long)]
        transient: Option<f64>,
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated parameter values for a sweep.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Trace one steady-state branch and report its bifurcations.
    Continue {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        branch: BranchArgs,
        /// Starting point `param,E,direction`.
        #[arg(long, value_parser = parse_start)]
        start: Option<StartSpec>,
    },
    /// Trace all branches met across the range and draw the diagram.
    Diagram {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        branch: BranchArgs,
        #[arg(long)]
        seeds: Option<usize>,
        /// SVG output path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Threshold delay of a sampled history: exact, residual and discretized.
    DelayCheck {
        #[command(flatten)]
        common: Common,
        /// CSV of `t,value` samples of the controlling variable.
        history: PathBuf,
        /// Which delay: `transcription` (E controls v_M) or `translation` (M controls v_I).
        #[arg(long, default_value = "transcription")]
        delay: String,
        /// Discretization size N.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Print the names of the shipped parameter sets.
    Fixtures,
}

fn parse_assignment(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("bad number in `{s}`"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_numbers(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number in `{s}`"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got `{s}`"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let v = parse_numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_start(s: &str) -> std::result::Result<StartSpec, String> {
    let v = parse_numbers(s, 3)?;
    Ok(StartSpec {
        param: v[0],
        e: v[1],
        direction: v[2],
    })
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(f) = &self.fixture {
            cfg.fixture = Some(f.clone());
            cfg.parameters = None;
            cfg.parameters_file = None;
        }
        if let Some(p) = &self.parameters {
            cfg.parameters_file = Some(p.clone());
            cfg.parameters = None;
            cfg.fixture = None;
        }
        for (k, v) in &self.overrides {
            cfg.overrides.insert(k.clone(), *v);
        }
        cfg.strict |= self.strict;
        set(&mut cfg.output, &self.out);
        set(&mut cfg.format, &self.format);
        set(&mut cfg.jobs, &self.jobs);
        Ok(cfg)
    }
}

impl SimulationArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.history, &self.history);
        set(&mut cfg.t_end, &self.t_end);
        set(&mut cfg.atol, &self.atol);
        set(&mut cfg.rtol, &self.rtol);
        set(&mut cfg.max_step, &self.max_step);
    }
}

impl BranchArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.param, &self.param);
        set(&mut cfg.range, &self.range);
    }
}

fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

/// A configured run, ready to execute.
pub struct Run {
    pub command: &'static str,
    pub config: RunConfig,
    pub params: OperonParameters,
    canonical: String,
}

impl Run {
    pub fn new(command: &'static str, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let params = config.resolve_parameters()?;
        // the hash covers the resolved parameters, not where they came from
        let mut resolved = config.clone();
        resolved.fixture = None;
        resolved.parameters_file = None;
        resolved.overrides.clear();
        resolved.parameters = Some(params.clone());
        resolved.output = None;
        resolved.svg = None;
        resolved.jobs = None;
        let canonical = serde_json::to_string(&resolved)?;
        Ok(Self {
            command,
            config,
            params,
            canonical,
        })
    }

    pub fn header(&self) -> RunHeader {
        RunHeader::new(self.command, &self.canonical)
    }

    fn format(&self, allowed: &[Format]) -> Result<Format> {
        let f = self.config.format.unwrap_or(Format::Csv);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(OperonError::Validation(format!(
                "`{}` cannot write {f:?} output",
                self.command
            )))
        }
    }

    fn emit(
        &self,
        path: Option<&Path>,
        header: &RunHeader,
        body: &str,
        format: Format,
    ) -> Result<()> {
        let text = match format {
            Format::Csv => format!("{}{body}", header.render()),
            // JSON and SVG carry the header in a comment-free form
            Format::Json => {
                let value = serde_json::json!({
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": header.command,
                    "config_sha256": header.config_hash,
                    "tolerances": header.tolerances.iter().cloned().collect::<BTreeMap<_, _>>(),
                    "data": serde_json::from_str::<serde_json::Value>(body)?,
                });
                serde_json::to_string_pretty(&value)? + "\n"
            }
            Format::Svg => {
                let comment = header.render().replace("# ", "").replace('\n', "; ");
                body.replacen("<svg", &format!("<!-- {comment}-->\n<svg"), 1)
            }
        };
        match path {
            Some(p) => fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }

    pub fn history(&self) -> Result<HistorySegment> {
        let spec = self.config.history.as_deref().unwrap_or("const:1,1,1");
        let window = required_window(&self.params);
        if let Some(rest) = spec.strip_prefix("const:") {
            let v = parse_numbers(rest, 3).map_err(OperonError::Parse)?;
            return Ok(HistorySegment::constant(
                StateVector::new(v[0], v[1], v[2]),
                0.0,
                window,
            ));
        }
        let (t, x) = output::parse_history_csv(&fs::read_to_string(spec)?)?;
        HistorySegment::from_samples(t, x)
    }
}

pub fn steady_states(run: &Run, stability: bool) -> Result<()> {
    let format = run.format(&[Format::Csv, Format::Json])?;
    let mut states = find_steady_states(&run.params, &SteadyStateOptions::default())?;
    if stability || run.config.stability {
        for s in &mut states {
            let ctx = CharacteristicContext::new(&run.params, s)?;
            s.unstable_count = Some(spectrum::count_unstable(&ctx));
        }
    }
    let body = match format {
        Format::Json => serde_json::to_string(&states)?,
        _ => output::steady_states_csv(&states),
    };
    run.emit(run.config.output.as_deref(), &run.header(), &body, format)
}

pub fn spectrum_cmd(run: &Run) -> Result<()> {
    let format = run.format(&[Format::Csv, Format::Json])?;
    let region = run.config.region.unwrap_or_default();
    let seeds = SeedGrid::default();
    let states = find_steady_states(&run.params, &SteadyStateOptions::default())?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (k, s) in states.iter().enumerate() {
        let ctx = CharacteristicContext::new(&run.params, s)?;
        let roots = spectrum::find_roots(&ctx, &region, &seeds);
        let lead = spectrum::leading_order_report(&ctx, &region, &seeds);
        let pair = lead
            .complex_leading
            .map(|l| format!("{:.5}{:+.5}i", l.re, l.im))
            .unwrap_or_else(|| "-".into());
        let real = lead
            .real_leading
            .map(|r| format!("{r:.5}"))
            .unwrap_or_else(|| "-".into());
        let three = lead
            .three_dl
            .map(|b| b.to_string())
            .unwrap_or_else(|| "insufficient-region".into());
        let line = format!(
            "state {k} E={:.6} unstable={} lambda1={:.5} leading_real={real} leading_pair={pair} 3DL={three}",
            s.e_star,
            spectrum::count_unstable(&ctx),
            roots.first().map(|r| r.lambda.re).unwrap_or(f64::NAN),
        );
        eprintln!("{line}");
        summary.push(line);
        rows.extend(roots.into_iter().map(|r| (k, r)));
    }
    let body = match format {
        Format::Json => {
            serde_json::to_string(&serde_json::json!({ "roots": rows, "summary": summary }))?
        }
        _ => {
            let mut b = output::roots_csv(&rows);
            for line in &summary {
                b.push_str(&format!("# {line}\n"));
            }
            b
        }
    };
    let header = run.header().tolerance("newton_residual", 1e-12);
    run.emit(run.config.output.as_deref(), &header, &body, format)
}

fn sim_header(run: &Run, o: &SimulationOptions) -> RunHeader {
    run.header()
        .tolerance("atol", o.atol)
        .tolerance("rtol", o.rtol)
        .tolerance("max_step", o.max_step)
}

fn run_simulation(run: &Run) -> Result<simulate::SimulationResult> {
    run.params.validate(Validation::Strict)?;
    let history = run.history()?;
    let t_end = run.config.t_end.unwrap_or(history.end() + 200.0);
    simulate::simulate(
        &run.params,
        &history,
        t_end,
        &run.config.simulation_options(),
    )
}

fn defect_lines(res: &simulate::SimulationResult) -> String {
    format!(
        "# defect transcription={:.3e} translation={:.3e} checkpoints={}\n# steps accepted={} rejected={} min_component={:.6e}\n",
        res.defect.transcription,
        res.defect.translation,
        res.defect.checkpoints,
        res.accepted_steps,
        res.rejected_steps,
        res.min_component
    )
}

pub fn simulate_cmd(run: &Run) -> Result<()> {
    run.format(&[Format::Csv])?;
    let res = run_simulation(run)?;
    let mut body = output::trajectory_csv(&res);
    let defect = defect_lines(&res);
    eprint!("{defect}");
    body.push_str(&defect);
    let header = sim_header(run, &run.config.simulation_options());
    run.emit(run.config.output.as_deref(), &header, &body, Format::Csv)
}

fn orbit_lines(o: &simulate::OrbitDescriptor) -> String {
    format!(
        "period {:.10}\nmax M={:.10} I={:.10} E={:.10}\nmin M={:.10} I={:.10} E={:.10}\none_norm {:.10}\nreturn_error {:.3e}\n",
        o.period, o.max.m, o.max.i, o.max.e, o.min.m, o.min.i, o.min.e, o.one_norm, o.return_error
    )
}

pub fn orbit_cmd(run: &Run) -> Result<()> {
    run.format(&[Format::Csv])?;
    let res = run_simulation(run)?;
    let oopts = run.config.orbit_options();
    let orbit = extract_orbit(&res, &oopts).map_err(|e| OperonError::Evaluation(e.to_string()))?;
    if run.config.output.is_some() {
        let body = output::trajectory_csv(&res) + &defect_lines(&res);
        run.emit(
            run.config.output.as_deref(),
            &sim_header(run, &run.config.simulation_options()),
            &body,
            Format::Csv,
        )?;
    }
    print!("{}", orbit_lines(&orbit));
    let Some(values) = &run.config.values else {
        return Ok(());
    };
    let name = run.config.require_param()?;
    let sweep_opts = OrbitSweepOptions {
        duration: run
            .config
            .duration
            .unwrap_or(OrbitSweepOptions::default().duration),
        orbit: OrbitOptions {
            transient: run
                .config
                .transient
                .unwrap_or(OrbitSweepOptions::default().orbit.transient),
            ..oopts
        },
        simulation: run.config.simulation_options(),
    };
    let sweep = simulate::continue_orbit(&run.params, &res, name, values, &sweep_opts)?;
    println!("{name},period,M_max,M_min,E_max,E_min,one_norm");
    for p in &sweep.points {
        let o = &p.orbit;
        println!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.value, o.period, o.max.m, o.min.m, o.max.e, o.min.e, o.one_norm
        );
    }
    if let Some((a, b)) = sweep.lost {
        println!("# orbit lost between {a} and {b}");
    }
    Ok(())
}

fn events_output_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("branch");
    out.with_file_name(format!("{stem}.events.csv"))
}

pub fn continue_cmd(run: &Run) -> Result<()> {
    let format = run.format(&[Format::Csv, Format::Json])?;
    let name = run.config.require_param()?;
    let range = run.config.require_range()?;
    let start = run
        .config
        .start
        .ok_or_else(|| OperonError::Validation("missing `start`".into()))?;
    let opts = ContinuationOptions::default();
    let p0 = continuation::start_point(&run.params, name, start.param, start.e, start.direction)?;
    let branch = continuation::trace_branch(&run.params, name, &p0, range, &opts)?;
    let events = continuation::detect_events(&run.params, &branch, &opts)?;
    eprint!("{}", continuation::bifurcation_table(&events, name));
    let header = run.header().tolerance("event", opts.event_tolerance);
    match format {
        Format::Json => {
            let body =
                serde_json::to_string(&serde_json::json!({ "branch": branch, "events": events }))?;
            run.emit(run.config.output.as_deref(), &header, &body, format)
        }
        _ => match &run.config.output {
            Some(out) => {
                run.emit(
                    Some(out),
                    &header,
                    &continuation::branch_csv(std::slice::from_ref(&branch)),
                    format,
                )?;
                run.emit(
                    Some(&events_output_path(out)),
                    &header,
                    &continuation::events_csv(&events),
                    format,
                )
            }
            None => run.emit(None, &header, &continuation::events_csv(&events), format),
        },
    }
}

pub fn diagram_cmd(run: &Run) -> Result<()> {
    let format = run.format(&[Format::Csv, Format::Json, Format::Svg])?;
    let name = run.config.require_param()?;
    let range = run.config.require_range()?;
    let opts = DiagramOptions {
        seeds: run.config.seeds.unwrap_or(DiagramOptions::default().seeds),
        ..DiagramOptions::default()
    };
    let d = continuation::diagram(&run.params, name, range, &opts)?;
    eprint!("{}", continuation::bifurcation_table(&d.events, name));
    let header = run
        .header()
        .tolerance("event", opts.continuation.event_tolerance);
    let svg_path = run
        .config
        .svg
        .clone()
        .or_else(|| run.config.output.as_ref().map(|o| o.with_extension("svg")));
    match format {
        Format::Svg => run.emit(
            run.config.output.as_deref(),
            &header,
            &continuation::diagram_svg(&d),
            format,
        ),
        Format::Json => run.emit(
            run.config.output.as_deref(),
            &header,
            &serde_json::to_string(&d)?,
            format,
        ),
        Format::Csv => {
            run.emit(
                run.config.output.as_deref(),
                &header,
                &continuation::events_csv(&d.events),
                format,
            )?;
            if let Some(p) = svg_path {
                run.emit(
                    Some(&p),
                    &header,
                    &continuation::diagram_svg(&d),
                    Format::Svg,
                )?;
            }
            Ok(())
        }
    }
}

/// Result of [`delay_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayCheck {
    pub t: f64,
    pub tau_exact: f64,
    /// `∫_{t-τ}^t v - a` at the exact delay.
    pub residual: f64,
    pub n: usize,
    pub tau_discretized: f64,
    pub discretization_error: f64,
}

/// Delay at the last sample of a `(t, value)` series. The series is
/// interpolated by cubic Hermite pieces with finite-difference slopes.
pub fn delay_check(spec: &ThresholdSpec, samples: &[(f64, f64)], n: usize) -> Result<DelayCheck> {
    if samples.len() < 2 {
        return Err(OperonError::Validation(
            "history needs at least two samples".into(),
        ));
    }
    let t: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let x: Vec<StateVector> = samples
        .iter()
        .map(|s| StateVector::new(s.1, s.1, s.1))
        .collect();
    let seg = HistorySegment::from_samples(t, x)?;
    let t_now = seg.end();
    let eval = |s: f64| {
        seg.eval(s.max(seg.start()))
            .map(|x| x.m)
            .unwrap_or(f64::NAN)
    };
    let tau = threshold::delay_exact(spec, &eval, t_now, seg.span())?;
    let v = |s: f64| spec.velocity(eval(s));
    let residual = quadrature::integrate(&v, t_now - tau, t_now, 1e-14 * spec.a) - spec.a;
    let grid = DiscretizationGrid::new(spec, n)?;
    if grid.nodes.last().copied().unwrap_or(0.0) > seg.span() * (1.0 + 1e-12) {
        return Err(OperonError::Horizon(format!(
            "history covers {} but the discretization grid needs {}",
            seg.span(),
            grid.nodes.last().unwrap()
        )));
    }
    let tau_d = threshold::delay_discretized(spec, &grid, &eval, t_now)?;
    Ok(DelayCheck {
        t: t_now,
        tau_exact: tau,
        residual,
        n,
        tau_discretized: tau_d,
        discretization_error: tau_d - tau,
    })
}

pub fn delay_check_cmd(run: &Run, history: &Path, delay: &str, n: Option<usize>) -> Result<()> {
    let spec = match delay {
        "transcription" => ThresholdSpec::transcription(&run.params)?,
        "translation" => ThresholdSpec::translation(&run.params)?,
        other => return Err(OperonError::Validation(format!("unknown delay `{other}`"))),
    };
    let samples = output::parse_series_csv(&fs::read_to_string(history)?)?;
    let c = delay_check(&spec, &samples, n.or(run.config.n).unwrap_or(48))?;
    println!("t {:.16e}", c.t);
    println!("tau_exact {:.16e}", c.tau_exact);
    println!("residual {:.3e}", c.residual);
    println!("tau_discretized(N={}) {:.16e}", c.n, c.tau_discretized);
    println!("discretization_error {:.3e}", c.discretization_error);
    Ok(())
}

fn build_run(
    command: &'static str,
    common: &Common,
    tweak: impl FnOnce(&mut RunConfig),
) -> Result<Run> {
    let mut cfg = common.config()?;
    tweak(&mut cfg);
    let run = Run::new(command, cfg)?;
    if let Some(j) = run.config.jobs {
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    Ok(run)
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SteadyStates { common, stability } => {
            let run = build_run("steady-states", &common, |_| {})?;
            steady_states(&run, stability)
        }
        Command::Spectrum { common } => spectrum_cmd(&build_run("spectrum", &common, |_| {})?),
        Command::Simulate { common, sim } => {
            simulate_cmd(&build_run("simulate", &common, |c| sim.apply(c))?)
        }
        Command::Orbit {
            common,
            sim,
            transient,
            param,
            values,
        } => {
            let run = build_run("orbit", &common, |c| {
                sim.apply(c);
                set(&mut c.transient, &transient);
                set(&mut c.param, &param);
                set(&mut c.values, &values);
            })?;
            orbit_cmd(&run)
        }
        Command::Continue {
            common,
            branch,
            start,
        } => {
            let run = build_run("continue", &common, |c| {
                branch.apply(c);
                set(&mut c.start, &start);
            })?;
            continue_cmd(&run)
        }
        Command::Diagram {
            common,
            branch,
            seeds,
            svg,
        } => {
            let run = build_run("diagram", &common, |c| {
                branch.apply(c);
                set(&mut c.seeds, &seeds);
                set(&mut c.svg, &svg);
            })?;
            diagram_cmd(&run)
        }
        Command::DelayCheck {
            common,
            history,
            delay,
            n,
        } => {
            let run = build_run("delay-check", &common, |_| {})?;
            delay_check_cmd(&run, &history, &delay, n)
        }
        Command::Fixtures => {
            for name in fixtures::names() {
                println!("{name}");
            }
            Ok(())
        }
    }
}

/// Parses `std::env::args`, runs, reports errors on stderr and returns the
/// exit status.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
