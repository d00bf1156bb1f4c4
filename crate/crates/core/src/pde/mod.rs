//! Explicit monotone finite-difference solver for the HJBI equation.
//!
//! Each control pair gets its own positive-type upwind stencil; the local
//! matrix game over those updates is solved per node. Pure modes replace the
//! game by `max_i min_j` or `min_j max_i`.

mod grid;
pub(crate) mod stencil;

pub use grid::{sup_diff, FieldLabel, SpaceGrid, ValueField};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, Orientation, DEFAULT_TOL};
use crate::problem::{Problem, ProblemError};
use stencil::{Combine, Stepper};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("time step {dt} violates the CFL limit {limit}")]
    CflLimit { dt: f64, limit: f64 },
    #[error("time step {dt} leaves a negative center weight {center_weight} at node {node}")]
    Cfl { dt: f64, center_weight: f64, node: usize },
    #[error("stencil weight {weight} for neighbor {neighbor} at node {node} is negative")]
    NonMonotone { node: usize, weight: f64, neighbor: usize },
    #[error("non-finite value at node {node}, t = {t}")]
    NonFinite { node: usize, t: f64 },
    #[error("|value| = {value} at node {node}, t = {t} exceeds the a-priori bound {bound}")]
    BoundExceeded { node: usize, t: f64, value: f64, bound: f64 },
    #[error("field has {got} values, grid has {expected}")]
    FieldSize { got: usize, expected: usize },
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
}

/// Which Hamiltonian the local game uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianMode {
    #[default]
    Relaxed,
    PureLower,
    PureUpper,
}

impl HamiltonianMode {
    pub fn label(self) -> FieldLabel {
        match self {
            HamiltonianMode::Relaxed => FieldLabel::VMixed,
            HamiltonianMode::PureLower => FieldLabel::VLowerPure,
            HamiltonianMode::PureUpper => FieldLabel::VUpperPure,
        }
    }

    pub(crate) fn combine(self, orientation: Orientation) -> Combine {
        match self {
            HamiltonianMode::Relaxed => Combine::Relaxed(orientation),
            HamiltonianMode::PureLower => Combine::PureLower,
            HamiltonianMode::PureUpper => Combine::PureUpper,
        }
    }
}

impl std::str::FromStr for HamiltonianMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relaxed" => Ok(HamiltonianMode::Relaxed),
            "pure_lower" => Ok(HamiltonianMode::PureLower),
            "pure_upper" => Ok(HamiltonianMode::PureUpper),
            other => Err(format!("unknown mode '{other}' (relaxed|pure_lower|pure_upper)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Time step; `None` picks `cfl_safety · CFL`.
    pub dt: Option<f64>,
    pub mode: HamiltonianMode,
    pub game_tol: f64,
    pub cfl_safety: f64,
    /// Order in which the relaxed local game is solved.
    pub orientation: Orientation,
}

impl Default for SchemeParams {
    fn default() -> Self {
        SchemeParams {
            dt: None,
            mode: HamiltonianMode::Relaxed,
            game_tol: DEFAULT_TOL,
            cfl_safety: 0.9,
            orientation: Orientation::SupInf,
        }
    }
}

impl SchemeParams {
    pub fn with_mode(mode: HamiltonianMode) -> Self {
        SchemeParams { mode, ..Self::default() }
    }

    fn validate(&self) -> Result<(), SchemeError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(SchemeError::InvalidParams(format!("cfl_safety {} not in (0, 1]", self.cfl_safety)));
        }
        if !(self.game_tol > 0.0 && self.game_tol.is_finite()) {
            return Err(SchemeError::InvalidParams(format!("game_tol {} must be positive", self.game_tol)));
        }
        if let Some(dt) = self.dt {
            if !(dt >= 0.0 && dt.is_finite()) {
                return Err(SchemeError::InvalidParams(format!("dt {dt} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// The step actually used: the requested one (checked against the
    /// limit) or the CFL default.
    pub fn resolve_dt(&self, prob: &Problem, grid: &SpaceGrid) -> Result<f64, SchemeError> {
        self.validate()?;
        let limit = self.cfl_safety * cfl_limit(prob, grid);
        match self.dt {
            Some(dt) if dt > limit * (1.0 + 1e-12) => Err(SchemeError::CflLimit { dt, limit }),
            Some(dt) => Ok(dt),
            None => Ok(limit),
        }
    }
}

/// `1 / (Σ sup a_ii / h_i² + Σ sup|β_i| / h_i + Lip_y f)` from the declared
/// bounds, where `β = b + σ·∂f/∂z` is the drift seen by the upwind gradient.
pub fn cfl_limit(prob: &Problem, grid: &SpaceGrid) -> f64 {
    let b = &prob.bounds;
    let d = prob.d as f64;
    let a_max = d * b.sup_sigma * b.sup_sigma;
    let beta_max = b.sup_b + d * b.sup_sigma * b.lip_z_f;
    let mut rate = b.lip_y_f;
    for i in 0..prob.d {
        let h = grid.h[i];
        rate += a_max / (h * h) + beta_max / h;
    }
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Number of uniform steps covering `span` with steps no longer than `dt`.
pub fn step_count(span: f64, dt: f64) -> usize {
    ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// `Φ` on the grid, boundary nodes filled.
pub fn terminal_field(prob: &Problem, grid: &SpaceGrid) -> Result<ValueField, SchemeError> {
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = grid.point(k);
        values.push(prob.terminal(&x[..prob.d])?);
    }
    grid.apply_boundary(&mut values);
    Ok(ValueField { t: prob.horizon, values, label: FieldLabel::VMixed })
}

/// One backward step of size `params.dt` (or the CFL default) from `field`.
pub fn step_back(
    field: &ValueField,
    prob: &Problem,
    grid: &SpaceGrid,
    params: &SchemeParams,
) -> Result<ValueField, SchemeError> {
    if field.values.len() != grid.len() {
        return Err(SchemeError::FieldSize { got: field.values.len(), expected: grid.len() });
    }
    let dt = params.resolve_dt(prob, grid)?;
    let stepper = Stepper::new(prob, grid, dt)?;
    let values = stepper.game_step(&field.values, field.t, params.mode.combine(params.orientation), params.game_tol)?;
    Ok(ValueField { t: field.t - dt, values, label: params.mode.label() })
}

fn check_bound(prob: &Problem, field: &ValueField) -> Result<(), SchemeError> {
    let bound = 1.1 * prob.value_bound() + 1e-9;
    for (node, &value) in field.values.iter().enumerate() {
        if value.abs() > bound {
            return Err(SchemeError::BoundExceeded { node, t: field.t, value, bound });
        }
    }
    Ok(())
}

/// Backward sweep on a whole number of steps `dt' ≤ dt` with `t_k = T·k/K`;
/// `keep(k)` selects which levels are returned (level `K` is `T`).
fn sweep(
    prob: &Problem,
    grid: &SpaceGrid,
    params: &SchemeParams,
    mut keep: impl FnMut(usize, usize) -> bool,
) -> Result<Vec<ValueField>, SchemeError> {
    let dt_max = params.resolve_dt(prob, grid)?;
    if dt_max <= 0.0 {
        return Err(SchemeError::InvalidParams("solve needs dt > 0".into()));
    }
    let steps = step_count(prob.horizon, dt_max);
    let dt = prob.horizon / steps as f64;
    let stepper = Stepper::new(prob, grid, dt)?;
    let combine = params.mode.combine(params.orientation);
    let label = params.mode.label();

    let mut current = terminal_field(prob, grid)?;
    current.label = label;
    check_bound(prob, &current)?;
    let mut out = Vec::new();
    if keep(steps, steps) {
        out.push(current.clone());
    }
    for k in (0..steps).rev() {
        let t_next = prob.horizon * (k + 1) as f64 / steps as f64;
        let values = stepper.game_step(&current.values, t_next, combine, params.game_tol)?;
        current = ValueField { t: prob.horizon * k as f64 / steps as f64, values, label };
        check_bound(prob, &current)?;
        if keep(k, steps) {
            out.push(current.clone());
        }
    }
    Ok(out)
}

/// All levels from `T` (first) down to `0` (last).
pub fn solve(prob: &Problem, grid: &SpaceGrid, params: &SchemeParams) -> Result<Vec<ValueField>, SchemeError> {
    sweep(prob, grid, params, |_, _| true)
}

/// Only the level at `t = 0`.
pub fn solve_initial(prob: &Problem, grid: &SpaceGrid, params: &SchemeParams) -> Result<ValueField, SchemeError> {
    let mut levels = sweep(prob, grid, params, |k, _| k == 0)?;
    Ok(levels.pop().expect("level 0 is always kept"))
}

/// Sup-norm gaps between the three value functions at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// `sup |V_upper_pure − V_lower_pure|`
    pub pure_gap: f64,
    /// `sup |V_mixed − V_lower_pure|`
    pub mixed_vs_lower: f64,
    /// `sup |V_mixed − V_upper_pure|`
    pub mixed_vs_upper: f64,
    /// Whether the sups run over the interior window or the full grid.
    pub window: Option<Vec<(f64, f64)>>,
    pub lower: ValueField,
    pub mixed: ValueField,
    pub upper: ValueField,
}

pub fn gap_report(prob: &Problem, grid: &SpaceGrid, params: &SchemeParams) -> Result<GapReport, SchemeError> {
    let run = |mode| solve_initial(prob, grid, &SchemeParams { mode, ..*params });
    let lower = run(HamiltonianMode::PureLower)?;
    let mixed = run(HamiltonianMode::Relaxed)?;
    let upper = run(HamiltonianMode::PureUpper)?;
    let window = prob.interior_window();
    let mask = match &window {
        Some(w) => grid.window_mask(w),
        None => vec![true; grid.len()],
    };
    Ok(GapReport {
        pure_gap: upper.sup_diff(&lower, &mask),
        mixed_vs_lower: mixed.sup_diff(&lower, &mask),
        mixed_vs_upper: mixed.sup_diff(&upper, &mask),
        window,
        lower,
        mixed,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;

    fn field(t: f64, values: Vec<f64>) -> ValueField {
        ValueField { t, values, label: FieldLabel::VMixed }
    }

    #[test]
    fn heat_step_is_the_explicit_stencil() {
        let p = catalog("heat_cosine").unwrap();
        let g = SpaceGrid::new(&p, 101);
        let v0 = terminal_field(&p, &g).unwrap();
        let dt = 0.5 * cfl_limit(&p, &g);
        let params = SchemeParams { dt: Some(dt), ..SchemeParams::default() };
        let out = step_back(&v0, &p, &g, &params).unwrap();
        let h = g.h[0];
        let period = g.len() - 1;
        for i in 0..period {
            let (l, r) = ((i + period - 1) % period, (i + 1) % period);
            let v = &v0.values;
            let expect = v[i] + dt * (v[r] - 2.0 * v[i] + v[l]) / (2.0 * h * h);
            assert!((out.values[i] - expect).abs() < 1e-15, "node {i}");
        }
        assert_eq!(out.values[period], out.values[0]);
        assert!((out.t - (1.0 - dt)).abs() < 1e-15);
    }

    #[test]
    fn constant_field_per_mode() {
        let p = catalog("uv_running_cost").unwrap();
        let g = SpaceGrid::new(&p, 51);
        let zero = field(1.0, vec![0.0; g.len()]);
        let dt = 1e-3;
        for (mode, expect) in
            [(HamiltonianMode::Relaxed, 0.0), (HamiltonianMode::PureLower, -dt), (HamiltonianMode::PureUpper, dt)]
        {
            let params = SchemeParams { dt: Some(dt), mode, ..SchemeParams::default() };
            let out = step_back(&zero, &p, &g, &params).unwrap();
            assert!(out.values.iter().all(|&v| (v - expect).abs() < 1e-18), "{mode:?}");
            assert_eq!(out.label, mode.label());
        }
    }

    #[test]
    fn zero_step_is_identity() {
        for name in crate::problem::CATALOG {
            let p = catalog(name).unwrap();
            let g = SpaceGrid::new(&p, if p.d == 1 { 41 } else { 11 });
            let v = terminal_field(&p, &g).unwrap();
            let params = SchemeParams { dt: Some(0.0), ..SchemeParams::default() };
            let out = step_back(&v, &p, &g, &params).unwrap();
            assert_eq!(out.values, v.values, "{name}");
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let p = catalog("heat_cosine").unwrap();
        let g = SpaceGrid::new(&p, 101);
        let params = SchemeParams { dt: Some(2.0 * cfl_limit(&p, &g)), ..SchemeParams::default() };
        let v = terminal_field(&p, &g).unwrap();
        assert!(matches!(step_back(&v, &p, &g, &params), Err(SchemeError::CflLimit { .. })));
    }

    #[test]
    fn cross_stencil_annihilates_affine_and_matches_trace() {
        let p = catalog("heat_2d").unwrap();
        let g = SpaceGrid::new(&p, 21);
        let dt = 0.5 * cfl_limit(&p, &g);
        let params = SchemeParams { dt: Some(dt), ..SchemeParams::default() };
        // quadratic x1·x2: ½ tr(a D²) = a12 = 0.5, exact for the 7-point stencil
        let q: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0] * g.point(k)[1]).collect();
        let out = step_back(&field(1.0, q.clone()), &p, &g, &params).unwrap();
        for k in 0..g.len() {
            let idx = g.multi(k);
            if idx[0] > 0 && idx[1] > 0 && idx[0] < 19 && idx[1] < 19 {
                assert!((out.values[k] - q[k] - 0.5 * dt).abs() < 1e-12, "node {k}");
            }
        }
    }

    #[test]
    fn running_cost_closed_forms() {
        let p = catalog("uv_running_cost").unwrap();
        let g = SpaceGrid::new(&p, 101);
        let rep = gap_report(&p, &g, &SchemeParams::default()).unwrap();
        assert!((rep.pure_gap - 2.0).abs() < 1e-9);
        assert!((rep.mixed_vs_lower - 1.0).abs() < 1e-9);
        assert!((rep.mixed_vs_upper - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orientation_is_bitwise_stable() {
        let p = catalog("uv_drift").unwrap();
        let g = SpaceGrid::new(&p, 61);
        let a = solve_initial(&p, &g, &SchemeParams::default()).unwrap();
        let b = solve_initial(&p, &g, &SchemeParams { orientation: Orientation::InfSup, ..SchemeParams::default() })
            .unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn solve_levels_run_from_t_to_zero() {
        let p = catalog("heat_cosine").unwrap();
        let g = SpaceGrid::new(&p, 41);
        let levels = solve(&p, &g, &SchemeParams::default()).unwrap();
        assert_eq!(levels.first().unwrap().t, 1.0);
        assert_eq!(levels.last().unwrap().t, 0.0);
        assert!(levels.windows(2).all(|w| w[0].t > w[1].t));
    }
}
