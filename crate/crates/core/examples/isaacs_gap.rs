//! Pointwise Hamiltonians: the pure lower and upper values of the local game
//! differ, while the relaxed (mixed) one sits between them.
//!
//! ```text
//! cargo run --example isaacs_gap -- uv_drift
//! ```

use mixedvalue::game::DEFAULT_TOL;
use mixedvalue::hamiltonian;
use mixedvalue::problem;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "uv_drift".into());
    let prob = problem::resolve(&name)?;
    let x = vec![0.0; prob.d];
    let p: Vec<f64> = (0..9).map(|i| -2.0 + 0.5 * i as f64).collect();
    let samples = hamiltonian::scan(&prob, 0.0, &x, 0.0, &p, &[0.0, 1.0], DEFAULT_TOL)?;
    println!("{name} at t = 0, x = 0");
    println!("{:>6} {:>5} {:>10} {:>10} {:>10} {:>9}", "p", "a", "H-", "H+", "H", "H+ - H-");
    for s in samples {
        println!(
            "{:>6.2} {:>5.2} {:>10.5} {:>10.5} {:>10.5} {:>9.4}",
            s.p,
            s.a,
            s.h_minus,
            s.h_plus,
            s.h_relaxed,
            s.h_plus - s.h_minus
        );
    }
    Ok(())
}
