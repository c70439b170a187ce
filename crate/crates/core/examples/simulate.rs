//! Long oscillatory transient near the unstable inducible state.

use operon::equilibria::{find_steady_states, SteadyStateOptions};
use operon::model::StateVector;
use operon::simulate::{required_window, simulate, HistorySegment, SimulationOptions};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("inducible_table3")?.with("vM_min", 0.1605)?;
    let states = find_steady_states(&params, &SteadyStateOptions::default())?;
    let unstable = states
        .iter()
        .find(|s| s.ge_slope > 0.0)
        .expect("middle state");
    println!(
        "unstable state E* = {:.4}, starting 1% above it",
        unstable.e_star
    );
    let start = StateVector::from_array(unstable.state().as_array().map(|c| 1.01 * c));
    let history = HistorySegment::constant(start, 0.0, required_window(&params));
    let res = simulate(&params, &history, 600.0, &SimulationOptions::default())?;
    for k in 0..=20 {
        let t = 30.0 * k as f64;
        let x = res.trajectory.eval(t)?;
        let (tau_m, _) = res.delays.at(t);
        println!(
            "t = {t:5.0}  M = {:.4}  I = {:.4}  E = {:.4}  tauM = {tau_m:.4}",
            x.m, x.i, x.e
        );
    }
    println!(
        "threshold defect {:.2e}, {} steps",
        res.defect.max(),
        res.accepted_steps
    );
    Ok(())
}
