//! Without the Isaacs condition the pure lower and upper values split apart;
//! the mixed value is the one the relaxed equation picks.
//!
//! ```text
//! cargo run --release --example non_isaacs_value -- uv_running_cost
//! ```

use mixedvalue::pde::{self, SchemeParams, SpaceGrid};
use mixedvalue::problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "uv_running_cost".into());
    let prob = problem::resolve(&name)?;
    let grid = SpaceGrid::new(&prob, prob.default_nx);
    let report = pde::gap_report(&prob, &grid, &SchemeParams::default())?;
    println!("{name}: nx = {}", prob.default_nx);
    println!("sup |H+ value - H- value| = {:.6}", report.pure_gap);
    println!("sup |mixed - lower|       = {:.6}", report.mixed_vs_lower);
    println!("sup |mixed - upper|       = {:.6}", report.mixed_vs_upper);
    let mid = grid.len() / 2;
    let x = grid.point(mid);
    println!(
        "at x = {:?}: lower {:+.6}, mixed {:+.6}, upper {:+.6}",
        &x[..prob.d],
        report.lower.values[mid],
        report.mixed.values[mid],
        report.upper.values[mid]
    );
    Ok(())
}
