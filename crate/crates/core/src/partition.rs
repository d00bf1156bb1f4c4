//! Backward induction over a time partition.
//!
//! On each subinterval `[t_{j-1}, t_j]` both players commit to controls. For
//! every pure pair the value at `t_j` is carried back with that pair held
//! fixed (monotone explicit substeps), and the matrix game over the pairs is
//! solved at every node. Lower sweeps solve it as sup-inf, upper sweeps as
//! inf-sup, on the same matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{self, GameError, MixedStrategy, Orientation, PayoffMatrix};
use crate::hamiltonian::{self, HamiltonianError, HamiltonianPoint};
use crate::montecarlo::{CellGrid, ProfileMode, StrategyProfile};
use crate::pde::{
    self, cfl_limit, stencil::Stepper, FieldLabel, HamiltonianMode, SchemeError, SchemeParams, SpaceGrid, ValueField,
};
use crate::problem::{Problem, ProblemError};

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("invalid partition: {0}")]
    Invalid(String),
    #[error("{substeps} substeps of {dt} on a subinterval exceed the stable step {limit}")]
    MeshTooCoarse { substeps: usize, dt: f64, limit: f64 },
    #[error("invalid local game: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// `0 = t_0 < t_1 < … < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn uniform(n: usize, horizon: f64) -> Result<Partition, PartitionError> {
        if n == 0 {
            return Err(PartitionError::Invalid("a partition needs at least one interval".into()));
        }
        let mut times: Vec<f64> = (0..=n).map(|j| horizon * j as f64 / n as f64).collect();
        times[n] = horizon;
        Partition::from_times(times, horizon)
    }

    pub fn from_times(times: Vec<f64>, horizon: f64) -> Result<Partition, PartitionError> {
        if times.len() < 2 {
            return Err(PartitionError::Invalid("need at least the two endpoints".into()));
        }
        if times[0] != 0.0 || *times.last().unwrap() != horizon {
            return Err(PartitionError::Invalid(format!(
                "endpoints must be exactly 0 and {horizon}, got {} and {}",
                times[0],
                times.last().unwrap()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(PartitionError::Invalid(format!("times not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Partition { times })
    }

    /// Number of subintervals.
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `(t_{j-1}, t_j)` for `j` in `1..=n`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        (self.times[j - 1], self.times[j])
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Copy with one extra point.
    pub fn refined_with(&self, t: f64) -> Result<Partition, PartitionError> {
        let mut times = self.times.clone();
        let pos = times.partition_point(|&s| s < t);
        times.insert(pos, t);
        Partition::from_times(times, *self.times.last().unwrap())
    }
}

/// Which side of the DPP a sweep computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrientation {
    /// `W^π`, local games solved as sup-inf.
    Lower,
    /// `U^π`, local games solved as inf-sup.
    Upper,
}

impl SweepOrientation {
    pub fn game_orientation(self) -> Orientation {
        match self {
            SweepOrientation::Lower => Orientation::SupInf,
            SweepOrientation::Upper => Orientation::InfSup,
        }
    }

    pub fn label(self) -> FieldLabel {
        match self {
            SweepOrientation::Lower => FieldLabel::WPi,
            SweepOrientation::Upper => FieldLabel::UPi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartitionParams {
    /// Hamiltonian mode, game tolerance and CFL safety; `dt` is ignored.
    pub scheme: SchemeParams,
    /// Substeps per subinterval; `None` picks `ceil(Δ / CFL step)`.
    pub substeps: Option<usize>,
    /// Keep the per-node saddle strategies as a feedback profile.
    pub record_profile: bool,
}

/// Frozen data of one local game: node `(t, x)` at the left end of a
/// subinterval of length `delta`, gradient `p` and Hessian `a` of the current
/// field, and that field's value at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGameSpec {
    pub t: f64,
    pub delta: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
    pub field_value: f64,
    /// Terminal value of `Y⁰` at the right end.
    pub y0: f64,
    pub substeps: usize,
}

impl LocalGameSpec {
    fn validate(&self, d: usize) -> Result<(), PartitionError> {
        if self.substeps == 0 {
            return Err(PartitionError::InvalidSpec("substeps must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(PartitionError::InvalidSpec(format!("interval length {} must be positive", self.delta)));
        }
        if self.x.len() != d || self.p.len() != d || self.a.len() != d * d {
            return Err(PartitionError::InvalidSpec("dimension mismatch".into()));
        }
        if self.p.iter().chain(&self.a).chain([&self.field_value, &self.y0]).any(|v| !v.is_finite()) {
            return Err(PartitionError::InvalidSpec("non-finite p, A or seed".into()));
        }
        Ok(())
    }
}

/// Integrates `-Ẏ = F₀(s, x, Y)` backward over the subinterval by explicit
/// Euler, where `F₀` is the game value of
/// `½tr(σσᵀA) + b·p + f(s, x, Y + field(x), p·σ, u, v)`. Returns `Y` at the
/// left end.
pub fn local_ode_step(
    spec: &LocalGameSpec,
    prob: &Problem,
    mode: HamiltonianMode,
    orientation: Orientation,
    tol: f64,
) -> Result<f64, PartitionError> {
    spec.validate(prob.d)?;
    let ds = spec.delta / spec.substeps as f64;
    let mut y = spec.y0;
    for k in (0..spec.substeps).rev() {
        let s = spec.t + spec.delta * (k + 1) as f64 / spec.substeps as f64;
        let pt = HamiltonianPoint::new(s, spec.x.clone(), y + spec.field_value, spec.p.clone(), spec.a.clone())?;
        let m = hamiltonian::payoff_matrix(&pt, prob)?;
        let f0 = match mode {
            HamiltonianMode::Relaxed => game::solve_game_oriented(&m, tol, orientation)?.value,
            HamiltonianMode::PureLower => game::pure_minimax(&m).0,
            HamiltonianMode::PureUpper => game::pure_minimax(&m).1,
        };
        y += ds * f0;
    }
    Ok(y)
}

/// Output of [`dpp_sweep`].
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Value at `t = 0`.
    pub field: ValueField,
    /// Values at every partition time, `t_n = T` first.
    pub levels: Vec<ValueField>,
    /// Saddle strategies per subinterval and node, when requested.
    pub profile: Option<StrategyProfile>,
    /// Substeps used on each subinterval (`j = 1..=n`).
    pub substeps: Vec<usize>,
}

fn substeps_for(delta: f64, limit: f64, requested: Option<usize>) -> Result<usize, PartitionError> {
    match requested {
        Some(0) => Err(PartitionError::InvalidSpec("substeps must be at least 1".into())),
        Some(s) => {
            let dt = delta / s as f64;
            if dt > limit * (1.0 + 1e-12) {
                Err(PartitionError::MeshTooCoarse { substeps: s, dt, limit })
            } else {
                Ok(s)
            }
        }
        None => Ok(pde::step_count(delta, limit)),
    }
}

/// `W^π` (lower) or `U^π` (upper) by backward induction over `pi`.
pub fn dpp_sweep(
    prob: &Problem,
    grid: &SpaceGrid,
    pi: &Partition,
    params: &PartitionParams,
    orientation: SweepOrientation,
) -> Result<SweepResult, PartitionError> {
    if *pi.times.last().unwrap() != prob.horizon {
        return Err(PartitionError::Invalid(format!(
            "partition ends at {} but the horizon is {}",
            pi.times.last().unwrap(),
            prob.horizon
        )));
    }
    let scheme = SchemeParams { dt: None, ..params.scheme };
    let limit = scheme.resolve_dt(prob, grid)?;
    let (m, k) = (prob.u_grid.len(), prob.v_grid.len());
    let pairs = m * k;
    let label = orientation.label();
    let game_orientation = orientation.game_orientation();

    let mut current = pde::terminal_field(prob, grid)?;
    current.label = label;
    let mut levels = vec![current.clone()];
    let mut mu_levels = Vec::new();
    let mut nu_levels = Vec::new();
    let mut substeps_used = vec![0; pi.len()];

    for j in (1..=pi.len()).rev() {
        let (t0, t1) = pi.interval(j);
        let delta = t1 - t0;
        let s = substeps_for(delta, limit, params.substeps)?;
        substeps_used[j - 1] = s;
        let stepper = Stepper::new(prob, grid, delta / s as f64)?;

        let mut carried = Vec::with_capacity(pairs);
        for pair in 0..pairs {
            let mut w = current.values.clone();
            for sub in (0..s).rev() {
                let t_next = t0 + delta * (sub + 1) as f64 / s as f64;
                w = stepper.propagate_pair(&w, pair, t_next)?;
            }
            carried.push(w);
        }

        let solved: Vec<(f64, Option<(MixedStrategy, MixedStrategy)>)> = (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let entries: Vec<f64> = carried.iter().map(|w| w[node]).collect();
                local_game(m, k, entries, params, game_orientation)
            })
            .collect::<Result<_, PartitionError>>()?;

        let mut values = Vec::with_capacity(grid.len());
        let mut mus = Vec::new();
        let mut nus = Vec::new();
        for (v, strategies) in solved {
            values.push(v);
            if let Some((mu, nu)) = strategies {
                mus.push(mu);
                nus.push(nu);
            }
        }
        grid.apply_boundary(&mut values);
        current = ValueField { t: t0, values, label };
        for (node, &v) in current.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SchemeError::NonFinite { node, t: t0 }.into());
            }
        }
        levels.push(current.clone());
        if params.record_profile {
            mu_levels.push(mus);
            nu_levels.push(nus);
        }
    }

    let profile = if params.record_profile {
        // collected from j = n down to 1
        mu_levels.reverse();
        nu_levels.reverse();
        Some(StrategyProfile {
            mode: ProfileMode::Feedback,
            times: pi.times.clone(),
            cells: Some(CellGrid::from_grid(grid)),
            player1: mu_levels,
            player2: nu_levels,
        })
    } else {
        None
    };
    Ok(SweepResult { field: current, levels, profile, substeps: substeps_used })
}

fn local_game(
    m: usize,
    k: usize,
    entries: Vec<f64>,
    params: &PartitionParams,
    orientation: Orientation,
) -> Result<(f64, Option<(MixedStrategy, MixedStrategy)>), PartitionError> {
    let record = params.record_profile;
    if entries.len() == 1 {
        let s = record.then(|| (MixedStrategy::pure(1, 0), MixedStrategy::pure(1, 0)));
        return Ok((entries[0], s));
    }
    let mat = PayoffMatrix::new(m, k, entries)?;
    match params.scheme.mode {
        HamiltonianMode::Relaxed => {
            let sol = game::solve_game_oriented(&mat, params.scheme.game_tol, orientation)?;
            Ok((sol.value, record.then_some((sol.mu_star, sol.nu_star))))
        }
        HamiltonianMode::PureLower => {
            // maximizer commits first; minimizer answers the chosen row
            let (i, row_min) = (0..m)
                .map(|i| (i, mat.row(i).iter().copied().fold(f64::INFINITY, f64::min)))
                .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
            let jstar = argbest(k, |j| mat.get(i, j), |a, b| a < b);
            Ok((row_min, record.then(|| (MixedStrategy::pure(m, i), MixedStrategy::pure(k, jstar)))))
        }
        HamiltonianMode::PureUpper => {
            let (j, col_max) = (0..k)
                .map(|j| (j, (0..m).map(|i| mat.get(i, j)).fold(f64::NEG_INFINITY, f64::max)))
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            let istar = argbest(m, |i| mat.get(i, j), |a, b| a > b);
            Ok((col_max, record.then(|| (MixedStrategy::pure(m, istar), MixedStrategy::pure(k, j)))))
        }
    }
}

fn argbest(n: usize, value: impl Fn(usize) -> f64, better: impl Fn(f64, f64) -> bool) -> usize {
    (1..n).fold(0, |best, i| if better(value(i), value(best)) { i } else { best })
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mesh: f64,
    /// `sup |W^π − V|` at `t = 0` over the study mask.
    pub w_vs_v: f64,
    pub u_vs_v: f64,
    pub w_vs_u: f64,
    /// `max_j sup |W^π(t_j) − W^π(t_{j-1})| / √Δ` over the study mask.
    pub time_modulus: f64,
    /// Largest discrete Lipschitz constant of `W^π` over all `t_j`.
    pub lipschitz: f64,
}

/// Where a convergence study measures its sups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StudyRegion {
    /// The problem's interior window, or the whole grid if it has none.
    #[default]
    Interior,
    Full,
}

/// Reference `V(0, ·)` for a convergence study and the number of uniform
/// time steps it was computed with.
#[derive(Debug, Clone)]
pub struct Reference {
    pub field: ValueField,
    pub steps: usize,
}

/// The relaxed PDE solution on `grid` with `steps` uniform time steps (must
/// respect the CFL limit).
pub fn reference_value(
    prob: &Problem,
    grid: &SpaceGrid,
    params: &PartitionParams,
    steps: usize,
) -> Result<Reference, PartitionError> {
    let scheme = SchemeParams { dt: Some(prob.horizon / steps as f64), ..params.scheme };
    Ok(Reference { field: pde::solve_initial(prob, grid, &scheme)?, steps })
}

/// A step count for the reference solve that is a multiple of every
/// partition's substep count, so the fine levels line up.
pub fn aligned_reference_steps(prob: &Problem, grid: &SpaceGrid, params: &PartitionParams, meshes: &[usize]) -> usize {
    let limit = params.scheme.cfl_safety * cfl_limit(prob, grid);
    let lcm = meshes.iter().fold(1usize, |acc, &n| lcm(acc, n.max(1)));
    let base = pde::step_count(prob.horizon, limit);
    base.div_ceil(lcm) * lcm
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Sweeps uniform partitions with `n` intervals for each `n` in `meshes` and
/// compares both orientations against `reference`. Unless substeps are given,
/// each subinterval takes `reference.steps / n` substeps when that divides,
/// so the fine time levels coincide with the reference's.
pub fn convergence_study(
    prob: &Problem,
    grid: &SpaceGrid,
    meshes: &[usize],
    params: &PartitionParams,
    reference: &Reference,
    region: StudyRegion,
) -> Result<Vec<ConvergenceRow>, PartitionError> {
    let mask = match (region, prob.interior_window()) {
        (StudyRegion::Interior, Some(w)) => grid.window_mask(&w),
        _ => vec![true; grid.len()],
    };
    let mut rows = Vec::with_capacity(meshes.len());
    for &n in meshes {
        let substeps = match params.substeps {
            None if n > 0 && reference.steps.is_multiple_of(n) => Some(reference.steps / n),
            other => other,
        };
        let params = PartitionParams { record_profile: false, substeps, ..*params };
        let pi = Partition::uniform(n, prob.horizon)?;
        let lower = dpp_sweep(prob, grid, &pi, &params, SweepOrientation::Lower)?;
        let upper = dpp_sweep(prob, grid, &pi, &params, SweepOrientation::Upper)?;
        let mut time_modulus = 0.0f64;
        for pair in lower.levels.windows(2) {
            let dt = pair[0].t - pair[1].t;
            time_modulus = time_modulus.max(pair[0].sup_diff(&pair[1], &mask) / dt.sqrt());
        }
        let lipschitz = lower.levels.iter().map(|l| grid.discrete_lipschitz(&l.values, &mask)).fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            n,
            mesh: pi.mesh(),
            w_vs_v: lower.field.sup_diff(&reference.field, &mask),
            u_vs_v: upper.field.sup_diff(&reference.field, &mask),
            w_vs_u: lower.field.sup_diff(&upper.field, &mask),
            time_modulus,
            lipschitz,
        });
    }
    Ok(rows)
}
