//! How much one player gains by deviating against a fixed profile: nothing
//! against the uniform saddle of matching pennies, the full horizon against a
//! point mass.
//!
//! ```text
//! cargo run --release --example exploitability
//! ```

use mixedvalue::montecarlo::{self, ExploitParams, FixedSide, RandomizationDevice, StrategyProfile};
use mixedvalue::{problem, MixedStrategy, Partition};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let prob = problem::catalog("uv_running_cost")?;
    let pi = Partition::uniform(8, prob.horizon)?;
    let device = RandomizationDevice::new(42);
    let params = ExploitParams::default();
    let cases = [
        ("uniform vs uniform", FixedSide::Player2, StrategyProfile::uniform(&prob, &pi)),
        (
            "player 2 always plays v = +1",
            FixedSide::Player2,
            StrategyProfile::constant(&pi, MixedStrategy::uniform(2), MixedStrategy::pure(2, 1)),
        ),
        (
            "player 1 always plays u = -1",
            FixedSide::Player1,
            StrategyProfile::constant(&pi, MixedStrategy::pure(2, 0), MixedStrategy::uniform(2)),
        ),
    ];
    for (label, side, profile) in cases {
        let rep = montecarlo::exploit(&prob, &pi, side, &profile, &[0.0], 20_000, &device, &params)?;
        println!(
            "{label:<30} gain {:+.4} ± {:.4} (best response {:+.4}, baseline {:+.4})",
            rep.gain, rep.std_error, rep.best_response, rep.baseline
        );
    }
    Ok(())
}
