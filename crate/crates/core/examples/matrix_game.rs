//! Solving finite zero-sum games: pure saddles, the 2×2 closed form and the
//! general simplex path.
//!
//! ```text
//! cargo run --example matrix_game
//! ```

use mixedvalue::game::{self, PayoffMatrix, DEFAULT_TOL};

fn show(name: &str, m: &PayoffMatrix) -> Result<(), game::GameError> {
    let sol = game::solve_game(m, DEFAULT_TOL)?;
    let (lo, hi) = game::pure_minimax(m);
    println!("{name} ({}×{})", m.rows(), m.cols());
    println!("  pure sup-inf {lo:+.4}, pure inf-sup {hi:+.4}, mixed value {:+.6}", sol.value);
    println!("  mu* = {:.4?}", sol.mu_star.weights());
    println!("  nu* = {:.4?}", sol.nu_star.weights());
    println!("  duality gap {:.1e}", sol.duality_gap);
    Ok(())
}

fn main() -> Result<(), game::GameError> {
    show("matching pennies", &PayoffMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]])?)?;
    show("pure saddle", &PayoffMatrix::from_rows(&[vec![3.0, 1.0], vec![4.0, 2.0]])?)?;
    show(
        "rock-paper-scissors",
        &PayoffMatrix::from_rows(&[vec![0.0, -1.0, 1.0], vec![1.0, 0.0, -1.0], vec![-1.0, 1.0, 0.0]])?,
    )?;
    // a Hilbert-like 6×5 game exercises the simplex
    show("6×5", &PayoffMatrix::from_fn(6, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / (1.0 + i as f64 + j as f64))?)?;
    Ok(())
}
