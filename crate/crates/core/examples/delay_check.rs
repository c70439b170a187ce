//! Exact versus discretized threshold delay for an oscillating history.

use operon::threshold::{delay_discretized, delay_exact, DiscretizationGrid, ThresholdSpec};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("repressible_table3")?.with("vM_min", 0.2)?;
    let spec = ThresholdSpec::transcription(&params)?;
    let history = |s: f64| 0.5 + 0.3 * (0.7 * s).sin();
    let exact = delay_exact(&spec, &history, 0.0, spec.tau_max())?;
    println!(
        "tau = {exact:.12} in [{:.3}, {:.3}]",
        spec.tau_min(),
        spec.tau_max()
    );
    for n in [12, 24, 48, 96, 192] {
        let grid = DiscretizationGrid::new(&spec, n)?;
        let d = delay_discretized(&spec, &grid, &history, 0.0)?;
        println!("N = {n:3}  tau_N = {d:.12}  error = {:.3e}", d - exact);
    }
    Ok(())
}
