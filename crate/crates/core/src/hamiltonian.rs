//! Pure and relaxed Hamiltonians.
//!
//! For a control pair `(u, v)`
//!
//! ```text
//! H(t,x,y,p,A,u,v) = ½ tr(σσᵀ A) + b·p + f(t, x, y, p·σ, u, v)
//! ```
//!
//! The pure lower/upper Hamiltonians take `sup_u inf_v` and `inf_v sup_u`
//! over the control grids; the relaxed one solves the matrix game over
//! mixed strategies, where both orders agree.

use serde::Serialize;
use thiserror::Error;

use crate::game::{self, GameError, GameSolution, PayoffMatrix};
use crate::problem::{FrozenCoefficients, Problem, ProblemError};

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid Hamiltonian point: {0}")]
    InvalidPoint(String),
}

/// `(t, x, y, p, A)` with `A` symmetric, row-major `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub p: Vec<f64>,
    pub a: Vec<f64>,
}

impl HamiltonianPoint {
    pub fn new(t: f64, x: Vec<f64>, y: f64, p: Vec<f64>, a: Vec<f64>) -> Result<Self, HamiltonianError> {
        let d = x.len();
        if p.len() != d || a.len() != d * d {
            return Err(HamiltonianError::InvalidPoint(format!(
                "dimension mismatch: x has {d}, p has {}, A has {}",
                p.len(),
                a.len()
            )));
        }
        if !(t.is_finite() && y.is_finite()) || x.iter().chain(&p).chain(&a).any(|v| !v.is_finite()) {
            return Err(HamiltonianError::InvalidPoint("non-finite entry".into()));
        }
        for i in 0..d {
            for j in 0..i {
                if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 {
                    return Err(HamiltonianError::InvalidPoint("A is not symmetric".into()));
                }
            }
        }
        Ok(Self { t, x, y, p, a })
    }

    /// Scalar convenience constructor for `d = 1`.
    pub fn scalar(t: f64, x: f64, y: f64, p: f64, a: f64) -> Self {
        Self { t, x: vec![x], y, p: vec![p], a: vec![a] }
    }
}

/// `z = p·σ`, i.e. `z_k = Σ_i p_i σ_ik`.
pub fn volatility_loading(p: &[f64], fr: &FrozenCoefficients, d: usize) -> [f64; 2] {
    let mut z = [0.0; 2];
    for (k, zk) in z.iter_mut().enumerate().take(d) {
        *zk = (0..d).map(|i| p[i] * fr.sigma[i * d + k]).sum();
    }
    z
}

/// `½ tr(σσᵀ A) + b·p` for frozen coefficients.
pub fn linear_part(fr: &FrozenCoefficients, p: &[f64], a: &[f64], d: usize) -> f64 {
    let trace: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| fr.a[i * d + j] * a[j * d + i]).sum();
    let drift: f64 = (0..d).map(|i| fr.b[i] * p[i]).sum();
    0.5 * trace + drift
}

/// `H(t, x, y, p, A, u, v)` for grid controls.
pub fn h_uv(pt: &HamiltonianPoint, prob: &Problem, u_idx: usize, v_idx: usize) -> Result<f64, HamiltonianError> {
    let d = prob.d;
    let fr = prob.freeze(pt.t, &pt.x, u_idx, v_idx)?;
    let z = volatility_loading(&pt.p, &fr, d);
    let f = prob.running_payoff(pt.t, &pt.x, pt.y, &z[..d], u_idx, v_idx)?;
    Ok(linear_part(&fr, &pt.p, &pt.a, d) + f)
}

/// Entry `(i, j)` is `H` at the `i`-th point of U and `j`-th point of V.
pub fn payoff_matrix(pt: &HamiltonianPoint, prob: &Problem) -> Result<PayoffMatrix, HamiltonianError> {
    let (m, k) = (prob.u_grid.len(), prob.v_grid.len());
    let mut data = Vec::with_capacity(m * k);
    for i in 0..m {
        for j in 0..k {
            data.push(h_uv(pt, prob, i, j)?);
        }
    }
    Ok(PayoffMatrix::new(m, k, data)?)
}

/// Relaxed Hamiltonian: the mixed-strategy saddle of [`payoff_matrix`].
pub fn h_relaxed(pt: &HamiltonianPoint, prob: &Problem, tol: f64) -> Result<GameSolution, HamiltonianError> {
    Ok(game::solve_game(&payoff_matrix(pt, prob)?, tol)?)
}

/// `(H⁻, H⁺)` over pure controls.
pub fn h_pure_bounds(pt: &HamiltonianPoint, prob: &Problem) -> Result<(f64, f64), HamiltonianError> {
    Ok(game::pure_minimax(&payoff_matrix(pt, prob)?))
}

/// One row of a Hamiltonian scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HamiltonianSample {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    pub a: f64,
    pub h_minus: f64,
    pub h_plus: f64,
    pub h_relaxed: f64,
    pub gap: f64,
}

/// Evaluates the three Hamiltonians on a `(p, A)` grid at fixed `(t, x, y)`.
/// In two dimensions `p` runs along the first axis and `A = a·I`.
pub fn scan(
    prob: &Problem,
    t: f64,
    x: &[f64],
    y: f64,
    p_values: &[f64],
    a_values: &[f64],
    tol: f64,
) -> Result<Vec<HamiltonianSample>, HamiltonianError> {
    let d = prob.d;
    let mut out = Vec::with_capacity(p_values.len() * a_values.len());
    for &p in p_values {
        for &a in a_values {
            let mut pv = vec![0.0; d];
            pv[0] = p;
            let mut av = vec![0.0; d * d];
            for i in 0..d {
                av[i * d + i] = a;
            }
            let pt = HamiltonianPoint::new(t, x.to_vec(), y, pv, av)?;
            let m = payoff_matrix(&pt, prob)?;
            let (h_minus, h_plus) = game::pure_minimax(&m);
            let sol = game::solve_game(&m, tol)?;
            out.push(HamiltonianSample {
                t,
                x: x[0],
                p,
                a,
                h_minus,
                h_plus,
                h_relaxed: sol.value,
                gap: sol.duality_gap,
            });
        }
    }
    Ok(out)
}
