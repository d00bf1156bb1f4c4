//! Defining a game in JSON: an Ornstein–Uhlenbeck state pushed by both
//! players, with a quadratic terminal cost.
//!
//! ```text
//! cargo run --release --example custom_problem
//! ```

use mixedvalue::pde::{self, SchemeParams, SpaceGrid};
use mixedvalue::problem::load_problem;

const SPEC: &str = r#"{
  "name": "ou_tug_of_war", "d": 1, "T": 0.5,
  "b": ["-x1 + u1 - v1"], "sigma": [["0.5"]], "f": "0.1*u1*v1", "phi": "min(x1*x1, 4)",
  "U": {"points": [[-1], [0], [1]]}, "V": {"points": [[-1], [1]]},
  "domain": {"min": [-4.0], "max": [4.0], "boundary": "clamp"},
  "condition41_mode": "sigma_uncontrolled", "nx": 161,
  "bounds": {"sup_b": 6, "sup_sigma": 0.5, "sup_f": 0.1, "sup_phi": 4,
             "lip_x_b": 1, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 4}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prob = load_problem(SPEC)?;
    for w in &prob.warnings {
        eprintln!("warning: {w}");
    }
    let grid = SpaceGrid::new(&prob, prob.default_nx);
    let report = pde::gap_report(&prob, &grid, &SchemeParams::default())?;
    println!("{}: {} × {} control pairs", prob.name, prob.u_grid.len(), prob.v_grid.len());
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "lower", "mixed", "upper");
    for k in (0..grid.len()).step_by(20) {
        println!(
            "{:>6.2} {:>10.5} {:>10.5} {:>10.5}",
            grid.point(k)[0],
            report.lower.values[k],
            report.mixed.values[k],
            report.upper.values[k]
        );
    }
    Ok(())
}
