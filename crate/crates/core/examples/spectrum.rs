//! Leading characteristic roots and eigenvectors at the middle steady state.

use operon::equilibria::{find_steady_states, SteadyStateOptions};
use operon::spectrum::{
    eigenvector, find_roots, leading_order_report, CharacteristicContext, Region, SeedGrid,
};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("repressible_m15n15")?.with("vM_min", 0.071577)?;
    let states = find_steady_states(&params, &SteadyStateOptions::default())?;
    let middle = &states[1];
    println!(
        "steady state ({:.4}, {:.4}, {:.4})",
        middle.m_star, middle.i_star, middle.e_star
    );
    let ctx = CharacteristicContext::new(&params, middle)?;
    let (region, seeds) = (Region::default(), SeedGrid::default());
    for r in find_roots(&ctx, &region, &seeds).iter().take(4) {
        let v = eigenvector(&ctx, r.lambda)?;
        let c = v.components;
        println!(
            "lambda = {:+.5} {:+.5}i   v = ({:.5}, {:.5}, {:.5})",
            r.lambda.re, r.lambda.im, c[0].re, c[1].re, c[2].re
        );
    }
    let lead = leading_order_report(&ctx, &region, &seeds);
    println!("3DL: {:?}", lead.three_dl);
    Ok(())
}
