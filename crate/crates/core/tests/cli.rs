use std::path::Path;
use std::process::{Command, Output};

use operon::continuation::events_csv;
use operon::equilibria::{find_steady_states, SteadyStateOptions};
use operon::output::{parse_events_csv, parse_steady_states_csv, parse_trajectory_csv};
use operon::{fixtures, OperonParameters};

fn operon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_operon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[test]
fn steady_states_three_rows_and_round_trip() {
    let out = operon(&["steady-states", "--fixture", "repressible_table3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("# operon "));
    assert!(text.contains("# config-sha256 "));
    let parsed = parse_steady_states_csv(&text).unwrap();
    assert_eq!(parsed.len(), 3);
    let direct = find_steady_states(
        &fixtures::load("repressible_table3").unwrap(),
        &SteadyStateOptions::default(),
    )
    .unwrap();
    assert_eq!(parsed, direct);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let args = [
        "steady-states",
        "--fixture",
        "inducible_table3",
        "--stability",
        "--set",
        "vM_min=0.06",
    ];
    let (a, b) = (operon(&args), operon(&args));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_config_is_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(
        &path,
        "{\n  \"fixture\": \"repressible_table3\",\n  \"range\": [0.1, \n}",
    )
    .unwrap();
    let out = operon(&["steady-states", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn strict_rejects_relaxed_parameters() {
    let args = [
        "steady-states",
        "--fixture",
        "repressible_table3",
        "--set",
        "vM_min=-0.005",
    ];
    assert_eq!(operon(&args).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(operon(&strict).status.code(), Some(2));
}

#[test]
fn unknown_parameter_and_fixture_are_exit_2() {
    assert_eq!(
        operon(&["steady-states", "--fixture", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        operon(&[
            "steady-states",
            "--fixture",
            "repressible_table3",
            "--set",
            "vmin=1"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(operon(&["spectrum"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_is_exit_3() {
    // a history ending at a steady state never crosses the section
    let out = operon(&[
        "orbit",
        "--fixture",
        "repressible_table3",
        "--set",
        "vM_min=0.03",
        "--history",
        "const:0.0284,0.0270,0.0270",
        "--t-end",
        "50",
        "--transient",
        "10",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn trajectory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = operon(&[
        "simulate",
        "--fixture",
        "twodelay_rep",
        "--history",
        "const:0.5,0.5,0.5",
        "--t-end",
        "20",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("# tolerances atol=1e-9 rtol=1e-7"));
    let rows = parse_trajectory_csv(&text).unwrap();
    assert_eq!(rows.first().unwrap().t, 0.0);
    assert_eq!(rows.last().unwrap().t, 20.0);
    assert!(rows.iter().all(|r| r.tau_i.is_some() && r.x.m > 0.0));
    // re-emitting the parsed numbers reproduces the file body
    let again: String = std::iter::once("t,M,I,E,tauM,tauI\n".to_string())
        .chain(rows.iter().map(|r| {
            format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.t,
                r.x.m,
                r.x.i,
                r.x.e,
                r.tau_m,
                r.tau_i.unwrap()
            )
        }))
        .collect();
    assert_eq!(again, body(&text));
}

fn run_to_file(dir: &Path, name: &str, args: &[&str]) -> String {
    let path = dir.join(name);
    let mut all = args.to_vec();
    all.extend(["-o", path.to_str().unwrap()]);
    let out = operon(&all);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn diagram_events_match_continue() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--fixture", "repressible_table3", "--param", "vM_min"];
    let mut cont = vec!["continue"];
    cont.extend(common);
    cont.extend(["--range", "0,0.05", "--start", "0.001,0,1"]);
    run_to_file(dir.path(), "branch.csv", &cont);
    let continued =
        parse_events_csv(&std::fs::read_to_string(dir.path().join("branch.events.csv")).unwrap())
            .unwrap();

    let mut diag = vec!["diagram"];
    diag.extend(common);
    diag.extend(["--range", "0.001,0.05"]);
    let text = run_to_file(dir.path(), "diagram.csv", &diag);
    let drawn = parse_events_csv(&text).unwrap();
    for ev in &continued {
        assert!(drawn.contains(ev), "{ev:?} missing from {drawn:?}");
    }
    assert_eq!(events_csv(&drawn), body(&text));
    let svg = std::fs::read_to_string(dir.path().join("diagram.svg")).unwrap();
    assert!(svg.contains("width=\"960\" height=\"640\"") && svg.contains("vM_min"));
}

#[test]
fn parameters_file_and_fixture_hash_alike() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let p: OperonParameters = fixtures::load("inducible_m4").unwrap();
    std::fs::write(&path, p.to_json()).unwrap();
    let a = stdout(&operon(&["steady-states", "--fixture", "inducible_m4"]));
    let b = stdout(&operon(&[
        "steady-states",
        "--parameters",
        path.to_str().unwrap(),
    ]));
    assert_eq!(a, b);
}

#[test]
fn delay_check_prints_all_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.csv");
    let rows: String = (0..=2000)
        .map(|k| {
            let t = -100.0 + 0.05 * k as f64;
            format!("{t},{}\n", 0.5 + 0.3 * (0.2 * t).sin())
        })
        .collect();
    std::fs::write(&path, format!("t,E\n{rows}")).unwrap();
    let out = operon(&[
        "delay-check",
        "--fixture",
        "repressible_table3",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for key in [
        "tau_exact",
        "residual",
        "tau_discretized(N=48)",
        "discretization_error",
    ] {
        assert!(text.contains(key), "{text}");
    }
}
