//! Simulating the feedback saddle profile recorded by the partition sweep and
//! comparing the Monte Carlo payoff with the computed value.
//!
//! ```text
//! cargo run --release --example monte_carlo_saddle -- uv_drift_cosine 100000
//! ```

use mixedvalue::montecarlo::{self, RandomizationDevice};
use mixedvalue::partition::{PartitionParams, SweepOrientation};
use mixedvalue::pde::SpaceGrid;
use mixedvalue::{dpp_sweep, problem, Partition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "uv_drift_cosine".into());
    let paths: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100_000);

    let prob = problem::resolve(&name)?;
    let grid = SpaceGrid::new(&prob, prob.default_nx);
    let pi = Partition::uniform(16, prob.horizon)?;
    let params = PartitionParams { record_profile: true, ..PartitionParams::default() };
    let sweep = dpp_sweep(&prob, &grid, &pi, &params, SweepOrientation::Lower)?;
    let profile = sweep.profile.expect("profile was requested");

    let x0 = vec![0.0; prob.d];
    let at_origin = |grid: &SpaceGrid, values: &[f64]| {
        let k = (0..grid.len())
            .min_by(|&a, &b| norm2(&grid.point(a)[..prob.d]).total_cmp(&norm2(&grid.point(b)[..prob.d])))
            .unwrap();
        values[k]
    };
    // upwinded drift makes the grid value first order in h; one Richardson
    // step removes most of it
    let coarse = at_origin(&grid, &sweep.field.values);
    let fine_grid = SpaceGrid::new(&prob, 2 * prob.default_nx - 1);
    let fine = dpp_sweep(&prob, &fine_grid, &pi, &PartitionParams::default(), SweepOrientation::Lower)?;
    let fine = at_origin(&fine_grid, &fine.field.values);
    println!("{name}: partition value at the origin {coarse:+.5} (nx {}), {fine:+.5} (nx {})", grid.n[0], fine_grid.n[0]);
    println!("extrapolated to h = 0: {:+.5}", 2.0 * fine - coarse);
    for seed in [1, 2] {
        let ens = montecarlo::simulate(&prob, &pi, &profile, &x0, paths, 4, &RandomizationDevice::new(seed))?;
        let (m, se) = montecarlo::estimate_payoff(&ens, &prob)?;
        println!("seed {seed}: {m:+.5} ± {se:.5} ({paths} paths)");
    }
    Ok(())
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
