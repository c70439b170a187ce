//! Steady states of a shipped parameter set, with their stability.

use operon::equilibria::{find_steady_states, SteadyStateOptions};
use operon::spectrum::{count_unstable, CharacteristicContext};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let name = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "repressible_table3".into());
    let params = fixtures::load(&name)?;
    println!(
        "{name}: {} operon",
        if params.is_strict() {
            "strict"
        } else {
            "relaxed"
        }
    );
    for s in find_steady_states(&params, &SteadyStateOptions::default())? {
        let ctx = CharacteristicContext::new(&params, &s)?;
        println!(
            "E* = {:.6}  M* = {:.6}  I* = {:.6}  tauM* = {:.4}  unstable roots = {}",
            s.e_star,
            s.m_star,
            s.i_star,
            s.tau_m_star,
            count_unstable(&ctx)
        );
    }
    Ok(())
}
