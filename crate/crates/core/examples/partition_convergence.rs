//! Convergence of the partition values towards the PDE value as the mesh
//! shrinks.
//!
//! ```text
//! cargo run --release --example partition_convergence -- uv_drift_cosine 2,4,8,16,32
//! ```

use mixedvalue::partition::{self, PartitionParams, StudyRegion};
use mixedvalue::pde::SpaceGrid;
use mixedvalue::problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "uv_drift_cosine".into());
    let meshes: Vec<usize> = args
        .next()
        .unwrap_or_else(|| "2,4,8,16,32".into())
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let region = match args.next().as_deref() {
        Some("full") => StudyRegion::Full,
        _ => StudyRegion::Interior,
    };

    let prob = problem::resolve(&name)?;
    let grid = SpaceGrid::new(&prob, prob.default_nx);
    let params = PartitionParams::default();
    let steps = partition::aligned_reference_steps(&prob, &grid, &params, &meshes);
    let reference = partition::reference_value(&prob, &grid, &params, steps)?;
    let rows = partition::convergence_study(&prob, &grid, &meshes, &params, &reference, region)?;

    println!("{name}: nx = {}, reference steps = {steps}", prob.default_nx);
    println!("L = {:.4}, time-modulus bound = {:.4}", prob.bounds.value_lipschitz, prob.time_modulus_bound());
    println!("{:>4} {:>9} {:>12} {:>12} {:>12} {:>10} {:>10}", "n", "mesh", "|W-V|", "|U-V|", "|W-U|", "modulus", "lipschitz");
    for r in &rows {
        println!(
            "{:>4} {:>9.5} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.4} {:>10.4}",
            r.n, r.mesh, r.w_vs_v, r.u_vs_v, r.w_vs_u, r.time_modulus, r.lipschitz
        );
    }
    Ok(())
}
