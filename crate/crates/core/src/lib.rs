//! Values of zero-sum stochastic differential games in mixed strategies.
//!
//! Without the Isaacs condition the pure lower and upper values differ. When
//! players randomize their controls over each subinterval of a time
//! partition, both values converge to one function: the viscosity solution
//! of an HJBI equation whose Hamiltonian is the value of a matrix game over
//! mixed controls.
//!
//! - [`dsl`]: expressions for coefficients and payoffs
//! - [`game`]: matrix games in mixed strategies
//! - [`problem`]: problem descriptions, validation and the built-in catalog
//! - [`hamiltonian`]: pure and relaxed Hamiltonians
//! - [`pde`]: explicit monotone scheme for the HJBI equation
//! - [`partition`]: backward induction over a time partition
//! - [`montecarlo`]: simulation with randomized controls
//! - [`cli`]: the `mixedvalue` command

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dsl;
pub mod game;
pub mod hamiltonian;
pub mod montecarlo;
pub mod partition;
pub mod pde;
pub mod problem;

pub use game::{solve_game, GameSolution, MixedStrategy, PayoffMatrix};
pub use partition::{dpp_sweep, Partition, SweepOrientation};
pub use pde::{HamiltonianMode, SchemeParams, SpaceGrid, ValueField};
pub use problem::{catalog, load_problem, Problem};

/// Any error from the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Dsl(#[from] dsl::DslError),
    #[error(transparent)]
    Game(#[from] game::GameError),
    #[error(transparent)]
    Problem(#[from] problem::ProblemError),
    #[error(transparent)]
    Hamiltonian(#[from] hamiltonian::HamiltonianError),
    #[error(transparent)]
    Scheme(#[from] pde::SchemeError),
    #[error(transparent)]
    Partition(#[from] partition::PartitionError),
    #[error(transparent)]
    MonteCarlo(#[from] montecarlo::McError),
}
