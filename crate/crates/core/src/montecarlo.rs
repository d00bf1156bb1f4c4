//! Simulation of the game with per-subinterval randomized controls.
//!
//! On each subinterval both players draw a control from their mixed
//! strategy, each from a private stream, and hold it while the state is
//! advanced by Euler–Maruyama. Every random number comes from a counter-based
//! stream addressed by `(path, subinterval, role)`, so ensembles do not
//! depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, MixedStrategy};
use crate::partition::Partition;
use crate::pde::SpaceGrid;
use crate::problem::{Problem, ProblemError, MAX_DIM};

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("non-finite state on path {path}, subinterval {interval}, substep {substep}")]
    NonFinite { path: usize, interval: usize, substep: usize },
    #[error("running payoff depends on {0}; use the PDE or partition solvers for this problem")]
    NotClassical(&'static str),
    #[error("invalid strategy profile: {0}")]
    Profile(String),
    #[error("invalid simulation input: {0}")]
    Invalid(String),
}

/// Stream roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Brownian = 0,
    Player1 = 1,
    Player2 = 2,
}

/// Master seed plus a counter-based generator: `(path, j, role)` selects an
/// independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizationDevice {
    pub master_seed: u64,
}

impl RandomizationDevice {
    pub fn new(master_seed: u64) -> Self {
        RandomizationDevice { master_seed }
    }

    /// Paths below 2^38 and subintervals below 2^22 give distinct streams.
    pub fn stream(&self, path: usize, interval: usize, role: Role) -> ChaCha8Rng {
        debug_assert!(path < 1 << 38 && interval < 1 << 22);
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((path as u64) << 24) | ((interval as u64) << 2) | role as u64);
        rng
    }

    /// A device for auxiliary simulations that shares no stream with `self`.
    pub fn derived(&self, salt: u64) -> Self {
        RandomizationDevice { master_seed: self.master_seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    OpenLoop,
    Feedback,
}

/// Uniform nodes on a box; a state is mapped to its nearest node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub d: usize,
    pub n: [usize; MAX_DIM],
    pub min: [f64; MAX_DIM],
    pub h: [f64; MAX_DIM],
}

impl CellGrid {
    pub fn from_grid(grid: &SpaceGrid) -> Self {
        CellGrid { d: grid.d, n: grid.n, min: grid.min, h: grid.h }
    }

    /// `nodes` per axis over the problem's box.
    pub fn over_domain(prob: &Problem, nodes: usize) -> Self {
        Self::from_grid(&SpaceGrid::new(prob, nodes.max(3)))
    }

    pub fn len(&self) -> usize {
        self.n[..self.d].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_index(&self, a: usize, x: f64) -> usize {
        let i = ((x - self.min[a]) / self.h[a]).round();
        i.clamp(0.0, (self.n[a] - 1) as f64) as usize
    }

    pub fn cell_of(&self, x: &[f64]) -> usize {
        let i0 = self.axis_index(0, x[0]);
        if self.d == 1 {
            i0
        } else {
            self.axis_index(1, x[1]) * self.n[0] + i0
        }
    }

    pub fn center(&self, cell: usize) -> [f64; MAX_DIM] {
        let idx = if self.d == 1 { [cell, 0] } else { [cell % self.n[0], cell / self.n[0]] };
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.d {
            x[a] = self.min[a] + idx[a] as f64 * self.h[a];
        }
        x
    }

    /// Multilinear interpolation of node values, constant beyond the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..self.d {
            let s = ((x[a] - self.min[a]) / self.h[a]).clamp(0.0, (self.n[a] - 1) as f64);
            let i = (s.floor() as usize).min(self.n[a] - 2);
            base[a] = i;
            frac[a] = s - i as f64;
        }
        let at = |i0: usize, i1: usize| if self.d == 1 { values[i0] } else { values[i1 * self.n[0] + i0] };
        if self.d == 1 {
            (1.0 - frac[0]) * at(base[0], 0) + frac[0] * at(base[0] + 1, 0)
        } else {
            let (i, j) = (base[0], base[1]);
            let (fx, fy) = (frac[0], frac[1]);
            (1.0 - fy) * ((1.0 - fx) * at(i, j) + fx * at(i + 1, j)) + fy * ((1.0 - fx) * at(i, j + 1) + fx * at(i + 1, j + 1))
        }
    }
}

/// Mixed strategies per subinterval, either one per subinterval (open loop)
/// or one per subinterval and cell (feedback on the state at the left end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub mode: ProfileMode,
    /// Partition the profile was built for.
    pub times: Vec<f64>,
    pub cells: Option<CellGrid>,
    /// `player1[j][cell]` for subinterval `j+1`.
    pub player1: Vec<Vec<MixedStrategy>>,
    pub player2: Vec<Vec<MixedStrategy>>,
}

impl StrategyProfile {
    /// The same strategies on every subinterval.
    pub fn constant(pi: &Partition, mu: MixedStrategy, nu: MixedStrategy) -> Self {
        StrategyProfile {
            mode: ProfileMode::OpenLoop,
            times: pi.times().to_vec(),
            cells: None,
            player1: vec![vec![mu]; pi.len()],
            player2: vec![vec![nu]; pi.len()],
        }
    }

    /// Both players uniform over their grids.
    pub fn uniform(prob: &Problem, pi: &Partition) -> Self {
        Self::constant(pi, MixedStrategy::uniform(prob.u_grid.len()), MixedStrategy::uniform(prob.v_grid.len()))
    }

    pub fn validate(&self, prob: &Problem, pi: &Partition) -> Result<(), McError> {
        let bad = |m: String| Err(McError::Profile(m));
        if self.times.len() != pi.times().len()
            || self.times.iter().zip(pi.times()).any(|(a, b)| (a - b).abs() > 1e-12 * prob.horizon.max(1.0))
        {
            return bad("profile times do not match the partition".into());
        }
        let cells = match (self.mode, &self.cells) {
            (ProfileMode::OpenLoop, _) => 1,
            (ProfileMode::Feedback, Some(c)) => {
                if c.d != prob.d {
                    return bad(format!("cell grid has dimension {}, problem {}", c.d, prob.d));
                }
                c.len()
            }
            (ProfileMode::Feedback, None) => return bad("feedback profile without a cell grid".into()),
        };
        for (who, levels, size) in
            [("player 1", &self.player1, prob.u_grid.len()), ("player 2", &self.player2, prob.v_grid.len())]
        {
            if levels.len() != pi.len() {
                return bad(format!("{who} has {} subintervals, partition has {}", levels.len(), pi.len()));
            }
            for (j, level) in levels.iter().enumerate() {
                if level.len() != cells {
                    return bad(format!("{who}, subinterval {}: {} cells, expected {cells}", j + 1, level.len()));
                }
                if let Some(s) = level.iter().find(|s| s.len() != size) {
                    return bad(format!("{who}, subinterval {}: strategy over {} controls, grid has {size}", j + 1, s.len()));
                }
            }
        }
        Ok(())
    }

    fn cell(&self, x: &[f64]) -> usize {
        match (&self.cells, self.mode) {
            (Some(c), ProfileMode::Feedback) => c.cell_of(x),
            _ => 0,
        }
    }

    /// Player 1's strategy on subinterval `j` (zero-based) at state `x`.
    pub fn mu(&self, j: usize, x: &[f64]) -> &MixedStrategy {
        &self.player1[j][self.cell(x)]
    }

    pub fn nu(&self, j: usize, x: &[f64]) -> &MixedStrategy {
        &self.player2[j][self.cell(x)]
    }
}

/// Simulated paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub d: usize,
    pub n_paths: usize,
    pub euler_substeps: usize,
    /// Substep times, `0` to `T`.
    pub times: Vec<f64>,
    /// `states[(path · times.len() + k) · d + a]`.
    pub states: Vec<f64>,
    /// `(u index, v index)` per path and subinterval.
    pub controls: Vec<(u32, u32)>,
    /// `Σ f dt` per path at left points; `None` unless f is free of `(y, z)`.
    pub running: Option<Vec<f64>>,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let s = (path * self.times.len() + k) * self.d;
        &self.states[s..s + self.d]
    }

    pub fn terminal_state(&self, path: usize) -> &[f64] {
        self.state(path, self.times.len() - 1)
    }

    pub fn control(&self, path: usize, interval: usize) -> (usize, usize) {
        let n = self.controls.len() / self.n_paths;
        let (u, v) = self.controls[path * n + interval];
        (u as usize, v as usize)
    }

    pub fn intervals(&self) -> usize {
        self.controls.len() / self.n_paths
    }
}

/// Errors unless `f` is free of `y` and `z`: syntactically, or failing that,
/// by a finite-difference probe at random points.
pub fn check_classical(prob: &Problem) -> Result<(), McError> {
    if prob.is_classical() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xc1a5);
    let d = prob.d;
    for _ in 0..64 {
        let t = rng.random::<f64>() * prob.horizon;
        let x: Vec<f64> = (0..d)
            .map(|a| prob.domain.min[a] + rng.random::<f64>() * (prob.domain.max[a] - prob.domain.min[a]))
            .collect();
        let y: f64 = rng.sample(StandardNormal);
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let (ui, vi) = (rng.random_range(0..prob.u_grid.len()), rng.random_range(0..prob.v_grid.len()));
        let base = prob.running_payoff(t, &x, y, &z, ui, vi)?;
        let tol = 1e-12 * (1.0 + base.abs());
        if (prob.running_payoff(t, &x, y + 1.0, &z, ui, vi)? - base).abs() > tol {
            return Err(McError::NotClassical("y"));
        }
        let z2: Vec<f64> = z.iter().map(|v| v + 1.0).collect();
        if (prob.running_payoff(t, &x, y, &z2, ui, vi)? - base).abs() > tol {
            return Err(McError::NotClassical("z"));
        }
    }
    Ok(())
}

/// Control choice on one subinterval.
enum Chooser<'a> {
    Profile(&'a StrategyProfile),
    /// Deterministic Markov policy `policy[j][cell]` for one player.
    Policy { cells: &'a CellGrid, policy: &'a [Vec<usize>] },
}

struct PathSpec<'a> {
    prob: &'a Problem,
    pi: &'a Partition,
    x0: &'a [f64],
    euler_substeps: usize,
    device: RandomizationDevice,
    p1: Chooser<'a>,
    p2: Chooser<'a>,
    classical: bool,
}

struct PathOut {
    states: Vec<f64>,
    controls: Vec<(u32, u32)>,
    running: f64,
}

fn choose(chooser: &Chooser, j: usize, x: &[f64], side: Role, rng: &mut ChaCha8Rng) -> usize {
    match chooser {
        Chooser::Profile(p) => {
            let s = if side == Role::Player1 { p.mu(j, x) } else { p.nu(j, x) };
            s.sample(rng.random::<f64>())
        }
        Chooser::Policy { cells, policy } => policy[j][cells.cell_of(x)],
    }
}

fn run_path(spec: &PathSpec, path: usize, keep_states: bool) -> Result<PathOut, McError> {
    let prob = spec.prob;
    let d = prob.d;
    let s = spec.euler_substeps;
    let n = spec.pi.len();
    let mut x = [0.0; MAX_DIM];
    x[..d].copy_from_slice(spec.x0);
    let mut states = Vec::with_capacity(if keep_states { (n * s + 1) * d } else { 0 });
    if keep_states {
        states.extend_from_slice(&x[..d]);
    }
    let mut controls = Vec::with_capacity(n);
    let mut running = 0.0;
    for j in 0..n {
        let (t0, t1) = spec.pi.interval(j + 1);
        let ui = choose(&spec.p1, j, &x[..d], Role::Player1, &mut spec.device.stream(path, j + 1, Role::Player1));
        let vi = choose(&spec.p2, j, &x[..d], Role::Player2, &mut spec.device.stream(path, j + 1, Role::Player2));
        controls.push((ui as u32, vi as u32));
        let mut bm = spec.device.stream(path, j + 1, Role::Brownian);
        let dt = (t1 - t0) / s as f64;
        let sq = dt.sqrt();
        for k in 0..s {
            let t = t0 + (t1 - t0) * k as f64 / s as f64;
            let fr = prob.freeze(t, &x[..d], ui, vi)?;
            if spec.classical {
                running += dt * prob.running_payoff(t, &x[..d], 0.0, &[0.0; MAX_DIM][..d], ui, vi)?;
            }
            let mut dw = [0.0; MAX_DIM];
            for w in dw.iter_mut().take(d) {
                *w = sq * bm.sample::<f64, _>(StandardNormal);
            }
            let mut next = [0.0; MAX_DIM];
            for a in 0..d {
                next[a] = x[a] + fr.b[a] * dt + (0..d).map(|c| fr.sigma[a * d + c] * dw[c]).sum::<f64>();
                if !next[a].is_finite() {
                    return Err(McError::NonFinite { path, interval: j + 1, substep: k });
                }
            }
            x = next;
            if keep_states {
                states.extend_from_slice(&x[..d]);
            }
        }
    }
    if !keep_states {
        states.extend_from_slice(&x[..d]);
    }
    Ok(PathOut { states, controls, running })
}

fn check_inputs(prob: &Problem, x0: &[f64], n_paths: usize, euler_substeps: usize) -> Result<(), McError> {
    if n_paths == 0 || euler_substeps == 0 {
        return Err(McError::Invalid("need at least one path and one substep".into()));
    }
    if x0.len() != prob.d || x0.iter().any(|v| !v.is_finite()) {
        return Err(McError::Invalid(format!("x0 must be {} finite numbers", prob.d)));
    }
    Ok(())
}

/// Simulates `n_paths` paths from `x0` under `profile`.
pub fn simulate(
    prob: &Problem,
    pi: &Partition,
    profile: &StrategyProfile,
    x0: &[f64],
    n_paths: usize,
    euler_substeps: usize,
    device: &RandomizationDevice,
) -> Result<PathEnsemble, McError> {
    check_inputs(prob, x0, n_paths, euler_substeps)?;
    profile.validate(prob, pi)?;
    let classical = check_classical(prob).is_ok();
    let spec = PathSpec {
        prob,
        pi,
        x0,
        euler_substeps,
        device: *device,
        p1: Chooser::Profile(profile),
        p2: Chooser::Profile(profile),
        classical,
    };
    let outs: Vec<PathOut> =
        (0..n_paths).into_par_iter().map(|path| run_path(&spec, path, true)).collect::<Result<_, _>>()?;

    let n = pi.len();
    let mut times = Vec::with_capacity(n * euler_substeps + 1);
    times.push(0.0);
    for j in 1..=n {
        let (t0, t1) = pi.interval(j);
        for k in 1..=euler_substeps {
            times.push(if k == euler_substeps { t1 } else { t0 + (t1 - t0) * k as f64 / euler_substeps as f64 });
        }
    }
    let mut states = Vec::with_capacity(n_paths * times.len() * prob.d);
    let mut controls = Vec::with_capacity(n_paths * n);
    let mut running = Vec::with_capacity(n_paths);
    for o in outs {
        states.extend(o.states);
        controls.extend(o.controls);
        running.push(o.running);
    }
    Ok(PathEnsemble {
        d: prob.d,
        n_paths,
        euler_substeps,
        times,
        states,
        controls,
        running: classical.then_some(running),
    })
}

/// Pairwise summation; the result depends only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-path payoffs `Φ(X_T) + Σ f dt`.
pub fn path_payoffs(ensemble: &PathEnsemble, prob: &Problem) -> Result<Vec<f64>, McError> {
    check_classical(prob)?;
    let running = ensemble.running.as_ref().ok_or(McError::NotClassical("y or z"))?;
    (0..ensemble.n_paths)
        .map(|i| Ok(prob.terminal(ensemble.terminal_state(i))? + running[i]))
        .collect()
}

/// Sample mean and standard error of the classical payoff.
pub fn estimate_payoff(ensemble: &PathEnsemble, prob: &Problem) -> Result<(f64, f64), McError> {
    Ok(mean_and_se(&path_payoffs(ensemble, prob)?))
}

/// The player whose profile stays fixed in [`exploit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSide {
    Player1,
    Player2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploitParams {
    pub euler_substeps: usize,
    /// Nodes per axis of the state grid the response is Markov on.
    pub cells: usize,
    /// Simulated one-step transitions per cell and control.
    pub samples_per_cell: usize,
}

impl Default for ExploitParams {
    fn default() -> Self {
        ExploitParams { euler_substeps: 4, cells: 41, samples_per_cell: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploitReport {
    /// How much the free player gains over its profile strategy (≥ 0 up to noise).
    pub gain: f64,
    pub std_error: f64,
    /// Payoff of the best response against the fixed profile.
    pub best_response: f64,
    /// Payoff of the unmodified profile on the same paths.
    pub baseline: f64,
    /// Best-response value predicted by the backward induction at `x0`.
    pub predicted: f64,
    /// `policy[j][cell]`: the free player's control index.
    pub policy: Vec<Vec<usize>>,
}

/// Estimates the free player's best Markov response to the fixed side of
/// `profile` by backward induction on simulated one-step kernels, then
/// scores it against the profile on common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn exploit(
    prob: &Problem,
    pi: &Partition,
    fixed: FixedSide,
    profile: &StrategyProfile,
    x0: &[f64],
    n_paths: usize,
    device: &RandomizationDevice,
    params: &ExploitParams,
) -> Result<ExploitReport, McError> {
    check_inputs(prob, x0, n_paths, params.euler_substeps)?;
    check_classical(prob)?;
    profile.validate(prob, pi)?;
    if params.samples_per_cell == 0 {
        return Err(McError::Invalid("samples_per_cell must be positive".into()));
    }
    let cells = CellGrid::over_domain(prob, params.cells);
    let free_controls = match fixed {
        FixedSide::Player1 => prob.v_grid.len(),
        FixedSide::Player2 => prob.u_grid.len(),
    };
    // the free player maximizes when player 2 is fixed
    let sign = if fixed == FixedSide::Player2 { 1.0 } else { -1.0 };
    let n = pi.len();
    let train = device.derived(0x7a11);
    let d = prob.d;
    let s = params.euler_substeps;

    // value of the free player's best response at cell nodes, from T back
    let mut policy = vec![Vec::new(); n];
    let mut next_value: Option<Vec<f64>> = None;
    for j in (0..n).rev() {
        let (t0, t1) = pi.interval(j + 1);
        let dt = (t1 - t0) / s as f64;
        let rows: Vec<(usize, f64)> = (0..cells.len())
            .into_par_iter()
            .map(|cell| -> Result<(usize, f64), McError> {
                let xc = cells.center(cell);
                let mut totals = vec![0.0; free_controls];
                for m in 0..params.samples_per_cell {
                    // one fixed-player draw and one Brownian path shared by every free control
                    let id = cell * params.samples_per_cell + m;
                    let fixed_idx = match fixed {
                        FixedSide::Player1 => {
                            profile.mu(j, &xc[..d]).sample(train.stream(id, j + 1, Role::Player1).random::<f64>())
                        }
                        FixedSide::Player2 => {
                            profile.nu(j, &xc[..d]).sample(train.stream(id, j + 1, Role::Player2).random::<f64>())
                        }
                    };
                    let mut bm = train.stream(id, j + 1, Role::Brownian);
                    let dws: Vec<f64> =
                        (0..s * d).map(|_| dt.sqrt() * bm.sample::<f64, _>(StandardNormal)).collect();
                    for (a, total) in totals.iter_mut().enumerate() {
                        let (ui, vi) = match fixed {
                            FixedSide::Player1 => (fixed_idx, a),
                            FixedSide::Player2 => (a, fixed_idx),
                        };
                        let mut x = xc;
                        let mut reward = 0.0;
                        for k in 0..s {
                            let t = t0 + (t1 - t0) * k as f64 / s as f64;
                            let fr = prob.freeze(t, &x[..d], ui, vi)?;
                            reward += dt * prob.running_payoff(t, &x[..d], 0.0, &[0.0; MAX_DIM][..d], ui, vi)?;
                            let mut nx = [0.0; MAX_DIM];
                            for r in 0..d {
                                nx[r] = x[r]
                                    + fr.b[r] * dt
                                    + (0..d).map(|c| fr.sigma[r * d + c] * dws[k * d + c]).sum::<f64>();
                            }
                            x = nx;
                        }
                        let cont = match &next_value {
                            None => prob.terminal(&x[..d])?,
                            Some(v) => cells.interpolate(v, &x[..d]),
                        };
                        *total += reward + cont;
                    }
                }
                let (best, val) = totals
                    .iter()
                    .enumerate()
                    .map(|(a, tot)| (a, sign * tot / params.samples_per_cell as f64))
                    .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
                Ok((best, sign * val))
            })
            .collect::<Result<_, _>>()?;
        policy[j] = rows.iter().map(|r| r.0).collect();
        next_value = Some(rows.iter().map(|r| r.1).collect());
    }
    let predicted = cells.interpolate(next_value.as_ref().expect("at least one interval"), x0);

    // score the response and the profile on identical streams
    let classical = true;
    let fixed_chooser = || Chooser::Profile(profile);
    let response = Chooser::Policy { cells: &cells, policy: &policy };
    let (p1, p2) = match fixed {
        FixedSide::Player1 => (fixed_chooser(), response),
        FixedSide::Player2 => (response, fixed_chooser()),
    };
    let br_spec = PathSpec { prob, pi, x0, euler_substeps: s, device: *device, p1, p2, classical };
    let base_spec = PathSpec {
        prob,
        pi,
        x0,
        euler_substeps: s,
        device: *device,
        p1: fixed_chooser(),
        p2: fixed_chooser(),
        classical,
    };
    let pairs: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|path| -> Result<(f64, f64), McError> {
            let a = run_path(&br_spec, path, false)?;
            let b = run_path(&base_spec, path, false)?;
            Ok((prob.terminal(&a.states)? + a.running, prob.terminal(&b.states)? + b.running))
        })
        .collect::<Result<_, _>>()?;
    let br: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let base: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = pairs.iter().map(|p| sign * (p.0 - p.1)).collect();
    let (gain, std_error) = mean_and_se(&diffs);
    Ok(ExploitReport {
        gain,
        std_error,
        best_response: mean_and_se(&br).0,
        baseline: mean_and_se(&base).0,
        predicted,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let dev = RandomizationDevice::new(42);
        let a: u64 = dev.stream(3, 2, Role::Player1).random();
        let b: u64 = dev.stream(3, 2, Role::Player1).random();
        let c: u64 = dev.stream(3, 2, Role::Player2).random();
        let e: u64 = dev.stream(4, 2, Role::Player1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, e);
        assert_ne!(a, RandomizationDevice::new(43).stream(3, 2, Role::Player1).random::<u64>());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        let (m, se) = mean_and_se(&[2.0, 2.0, 2.0]);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn cell_lookup_and_interpolation() {
        let p = catalog("uv_running_cost").unwrap();
        let c = CellGrid::over_domain(&p, 11);
        assert_eq!(c.cell_of(&[-5.0]), 0);
        assert_eq!(c.cell_of(&[0.4]), 5);
        assert_eq!(c.cell_of(&[99.0]), 10);
        let v: Vec<f64> = (0..11).map(|i| c.center(i)[0] * 2.0).collect();
        assert!((c.interpolate(&v, &[0.3]) - 0.6).abs() < 1e-12);
        assert_eq!(c.interpolate(&v, &[-7.0]), -10.0);
    }

    #[test]
    fn zero_dynamics_keep_state() {
        let cfg = crate::problem::catalog_source("uv_running_cost").unwrap();
        let mut cfg: serde_json::Value = serde_json::from_str(cfg).unwrap();
        cfg["sigma"] = serde_json::json!([["0"]]);
        cfg["f"] = "0".into();
        cfg["bounds"] = serde_json::json!({});
        let p = crate::problem::load_problem(&cfg.to_string()).unwrap();
        let pi = Partition::uniform(3, 1.0).unwrap();
        let prof = StrategyProfile::uniform(&p, &pi);
        let ens = simulate(&p, &pi, &prof, &[0.7], 50, 3, &RandomizationDevice::new(1)).unwrap();
        assert!(ens.states.iter().all(|&x| x == 0.7));
        assert_eq!(estimate_payoff(&ens, &p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn non_classical_rejected() {
        let p = catalog("uv_discounted").unwrap();
        let pi = Partition::uniform(2, 1.0).unwrap();
        let prof = StrategyProfile::uniform(&p, &pi);
        let ens = simulate(&p, &pi, &prof, &[0.0], 10, 1, &RandomizationDevice::new(1)).unwrap();
        assert!(ens.running.is_none());
        assert!(matches!(estimate_payoff(&ens, &p), Err(McError::NotClassical(_))));
    }

    #[test]
    fn profile_validation() {
        let p = catalog("uv_running_cost").unwrap();
        let pi = Partition::uniform(2, 1.0).unwrap();
        let mut prof = StrategyProfile::uniform(&p, &pi);
        assert!(prof.validate(&p, &pi).is_ok());
        prof.player1[1][0] = MixedStrategy::uniform(3);
        assert!(prof.validate(&p, &pi).is_err());
        let other = Partition::uniform(3, 1.0).unwrap();
        assert!(StrategyProfile::uniform(&p, &pi).validate(&p, &other).is_err());
    }

    #[test]
    fn control_free_exploitability_is_zero() {
        let p = catalog("heat_cosine").unwrap();
        let pi = Partition::uniform(2, 1.0).unwrap();
        let prof = StrategyProfile::uniform(&p, &pi);
        let params = ExploitParams { cells: 11, samples_per_cell: 10, ..ExploitParams::default() };
        let r = exploit(&p, &pi, FixedSide::Player2, &prof, &[0.0], 200, &RandomizationDevice::new(5), &params)
            .unwrap();
        assert_eq!(r.gain, 0.0);
        assert_eq!(r.std_error, 0.0);
    }
}
