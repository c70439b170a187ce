//! Steady-state counts across vM_min, compared with the topological bound.

use operon::equilibria::steady_state_census;
use operon::{fixtures, Result};

fn main() -> Result<()> {
    for name in fixtures::names() {
        let base = fixtures::load(name)?;
        let c = steady_state_census(&base)?;
        println!(
            "{name:<20} states {}  bound {} (chi_I {}, n_tau {})",
            c.count, c.bound, c.chi_i, c.n_tau
        );
    }
    let base = fixtures::load("repressible_table3")?;
    println!("\nvM_min   states");
    for k in 1..=10 {
        let v = 0.005 * k as f64;
        println!(
            "{v:.3}    {}",
            steady_state_census(&base.with("vM_min", v)?)?.count
        );
    }
    Ok(())
}
