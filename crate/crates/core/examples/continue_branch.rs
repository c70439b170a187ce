//! One steady-state branch in vM_min and its fold/Hopf points.

use operon::continuation::{
    bifurcation_table, detect_events, start_point, trace_branch, ContinuationOptions,
};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("repressible_n15")?;
    let opts = ContinuationOptions::default();
    let start = start_point(&params, "vM_min", 0.001, 0.0, 1.0)?;
    let branch = trace_branch(&params, "vM_min", &start, (0.0, 0.1), &opts)?;
    println!("{} points, {:?}", branch.points.len(), branch.status);
    let events = detect_events(&params, &branch, &opts)?;
    print!("{}", bifurcation_table(&events, "vM_min"));
    Ok(())
}
