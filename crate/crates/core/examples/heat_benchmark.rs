//! The explicit scheme on the heat equation with `Φ = cos x`, whose exact
//! value is `e^{-(T-t)/2} cos x`, at several resolutions.
//!
//! ```text
//! cargo run --release --example heat_benchmark
//! ```

use mixedvalue::pde::{self, SchemeParams, SpaceGrid};
use mixedvalue::problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prob = problem::catalog("heat_cosine")?;
    let window = prob.interior_window().expect("bounded domain");
    let mut prev: Option<f64> = None;
    println!("{:>5} {:>10} {:>12} {:>7}", "nx", "dt", "sup error", "ratio");
    for nx in [51, 101, 201, 401, 801] {
        let grid = SpaceGrid::new(&prob, nx);
        let params = SchemeParams::default();
        let dt = params.resolve_dt(&prob, &grid)?;
        let v = pde::solve_initial(&prob, &grid, &params)?;
        let exact: Vec<f64> = (0..grid.len()).map(|k| (-0.5f64).exp() * grid.point(k)[0].cos()).collect();
        let err = pde::sup_diff(&v.values, &exact, &grid.window_mask(&window));
        let ratio = prev.map(|p| format!("{:.3}", p / err)).unwrap_or_default();
        println!("{nx:>5} {dt:>10.3e} {err:>12.4e} {ratio:>7}");
        prev = Some(err);
    }
    Ok(())
}
