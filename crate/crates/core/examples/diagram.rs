//! Full bifurcation diagram written as SVG.

use operon::continuation::{bifurcation_table, diagram, diagram_svg, DiagramOptions};
use operon::{fixtures, Result};

fn main() -> Result<()> {
    let params = fixtures::load("repressible_table3")?;
    let d = diagram(&params, "vM_min", (0.001, 0.05), &DiagramOptions::default())?;
    print!("{}", bifurcation_table(&d.events, "vM_min"));
    let path = std::env::temp_dir().join("repressible_table3.svg");
    std::fs::write(&path, diagram_svg(&d))?;
    println!(
        "{} branches, diagram written to {}",
        d.branches.len(),
        path.display()
    );
    Ok(())
}
