//! A stable orbit followed in vM_min until it disappears.

use operon::model::StateVector;
use operon::simulate::{
    continue_orbit, extract_orbit, required_window, simulate, HistorySegment, OrbitOptions,
    OrbitSweepOptions, SimulationOptions,
};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("inducible_m4")?.with("vM_min", 0.18)?;
    let history = HistorySegment::constant(
        StateVector::new(2.0, 2.0, 2.0),
        0.0,
        required_window(&params),
    );
    let seed = simulate(&params, &history, 2000.0, &SimulationOptions::default())?;
    let orbit = extract_orbit(
        &seed,
        &OrbitOptions {
            transient: 1000.0,
            ..OrbitOptions::default()
        },
    )
    .map_err(|e| operon::OperonError::Evaluation(e.to_string()))?;
    println!(
        "vM_min 0.18: period {:.4}, one-norm {:.4}",
        orbit.period, orbit.one_norm
    );

    let values: Vec<f64> = (1..=6).map(|k| 0.18 + 0.005 * k as f64).collect();
    let sweep = continue_orbit(
        &params,
        &seed,
        "vM_min",
        &values,
        &OrbitSweepOptions::default(),
    )?;
    for p in &sweep.points {
        println!(
            "vM_min {:.5}: period {:.4}, E in [{:.4}, {:.4}]",
            p.value, p.orbit.period, p.orbit.min.e, p.orbit.max.e
        );
    }
    if let Some((a, b)) = sweep.lost {
        println!("orbit lost between {a:.5} and {b:.5}");
    }
    Ok(())
}
