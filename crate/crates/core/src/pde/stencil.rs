//! Per-control-pair monotone finite-difference updates.

use rayon::prelude::*;

use super::grid::SpaceGrid;
use super::SchemeError;
use crate::game::{self, Orientation, PayoffMatrix};
use crate::problem::{Problem, MAX_DIM};

/// Neighbor offsets in a fixed order; slot 0 is the node itself.
const OFFSETS_1D: [[isize; 2]; 3] = [[0, 0], [1, 0], [-1, 0]];
const OFFSETS_2D: [[isize; 2]; 9] =
    [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [1, -1], [-1, 1]];

/// One explicit update `Σ w_n v[n] + dt·f(t, x, v[node], p·σ, u, v)` with
/// all weights non-negative and summing to one.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairStencil {
    nbr: [u32; 9],
    w: [f64; 9],
    len: u8,
    /// Upwind gradient `p_a = c_a (v[hi_a] - v[lo_a])`.
    grad: [(u32, u32, f64); MAX_DIM],
    sigma: [f64; MAX_DIM * MAX_DIM],
    /// `f` when it depends on neither `t`, `y` nor `z`.
    f_const: Option<f64>,
}

/// How the local game turns the pair updates into one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Combine {
    Relaxed(Orientation),
    PureLower,
    PureUpper,
}

pub(crate) struct Stepper<'a> {
    prob: &'a Problem,
    grid: &'a SpaceGrid,
    dt: f64,
    computed: Vec<usize>,
    pairs: usize,
    /// Stencils for `(computed node, pair)` when b and σ do not depend on `t`.
    cache: Option<Vec<PairStencil>>,
    z_slope: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(prob: &'a Problem, grid: &'a SpaceGrid, dt: f64) -> Result<Self, SchemeError> {
        let computed: Vec<usize> = (0..grid.len()).filter(|&k| grid.is_computed(k)).collect();
        let mut stepper = Stepper {
            prob,
            grid,
            dt,
            computed,
            pairs: prob.control_pairs(),
            cache: None,
            z_slope: prob.f_uses_z(),
        };
        if prob.dynamics_time_independent() {
            let t = prob.horizon;
            let built: Result<Vec<PairStencil>, SchemeError> = (0..stepper.computed.len())
                .into_par_iter()
                .flat_map_iter(|pos| {
                    let st = &stepper;
                    (0..st.pairs).map(move |pair| st.build(st.computed[pos], pair, t))
                })
                .collect();
            stepper.cache = Some(built?);
        }
        Ok(stepper)
    }

    fn build(&self, node: usize, pair: usize, t: f64) -> Result<PairStencil, SchemeError> {
        let (prob, grid, dt) = (self.prob, self.grid, self.dt);
        let d = prob.d;
        let (ui, vi) = (pair / prob.v_grid.len(), pair % prob.v_grid.len());
        let x = grid.point(node);
        let fr = prob.freeze(t, &x[..d], ui, vi)?;

        // drift seen by the gradient, including f's z-slope through z = p·σ
        let mut beta = fr.b;
        if self.z_slope {
            for k in 0..d {
                let mut e = [0.0; MAX_DIM];
                e[k] = 1.0;
                let mut m = [0.0; MAX_DIM];
                m[k] = -1.0;
                let fp = prob.running_payoff(t, &x[..d], 0.0, &e[..d], ui, vi)?;
                let fm = prob.running_payoff(t, &x[..d], 0.0, &m[..d], ui, vi)?;
                let g = 0.5 * (fp - fm);
                for a in 0..d {
                    beta[a] += fr.sigma[a * d + k] * g;
                }
            }
        }

        let idx = grid.multi(node);
        let offsets: &[[isize; 2]] = if d == 1 { &OFFSETS_1D } else { &OFFSETS_2D };
        let mut w = [0.0; 9];
        for a in 0..d {
            let h = grid.h[a];
            let diff = 0.5 * fr.a[a * d + a] / (h * h);
            let (plus, minus) = (1 + 2 * a, 2 + 2 * a);
            w[plus] += diff + beta[a].max(0.0) / h;
            w[minus] += diff + (-beta[a]).max(0.0) / h;
            w[0] -= 2.0 * diff + beta[a].abs() / h;
        }
        if d == 2 {
            let a12 = fr.a[1];
            let c = a12.abs() / (2.0 * grid.h[0] * grid.h[1]);
            for axis_slot in 1..5 {
                w[axis_slot] -= c;
            }
            w[0] += 2.0 * c;
            if a12 >= 0.0 {
                w[5] += c;
                w[6] += c;
            } else {
                w[7] += c;
                w[8] += c;
            }
        }
        for wn in w.iter_mut().take(offsets.len()) {
            *wn *= dt;
        }
        w[0] += 1.0;
        for (n, &wn) in w.iter().enumerate().take(offsets.len()).skip(1) {
            if wn < -1e-14 {
                return Err(SchemeError::NonMonotone { node, weight: wn, neighbor: n });
            }
        }
        if w[0] < -1e-14 {
            return Err(SchemeError::Cfl { dt, center_weight: w[0], node });
        }
        let mut nbr = [0u32; 9];
        for (n, off) in offsets.iter().enumerate() {
            nbr[n] = grid.neighbor(idx, *off) as u32;
        }

        let mut grad = [(node as u32, node as u32, 0.0); MAX_DIM];
        for a in 0..d {
            let h = grid.h[a];
            let (plus, minus) = (nbr[1 + 2 * a], nbr[2 + 2 * a]);
            grad[a] = if beta[a] > 0.0 {
                (plus, node as u32, 1.0 / h)
            } else if beta[a] < 0.0 {
                (node as u32, minus, 1.0 / h)
            } else {
                (plus, minus, 0.5 / h)
            };
        }

        let f = prob.running_expr();
        let f_const = if f.uses_time() || f.uses_y() || f.uses_z() {
            None
        } else {
            Some(prob.running_payoff(t, &x[..d], 0.0, &[0.0; MAX_DIM][..d], ui, vi)?)
        };
        Ok(PairStencil { nbr, w, len: offsets.len() as u8, grad, sigma: fr.sigma, f_const })
    }

    fn stencil(&self, pos: usize, pair: usize, t: f64) -> Result<PairStencil, SchemeError> {
        match &self.cache {
            Some(c) => Ok(c[pos * self.pairs + pair]),
            None => self.build(self.computed[pos], pair, t),
        }
    }

    /// The explicit update of `values` at computed node `pos` under `pair`.
    fn apply(&self, st: &PairStencil, pos: usize, pair: usize, values: &[f64], t: f64) -> Result<f64, SchemeError> {
        let mut acc = 0.0;
        for n in 0..st.len as usize {
            acc += st.w[n] * values[st.nbr[n] as usize];
        }
        if self.dt == 0.0 {
            return Ok(acc);
        }
        let f = match st.f_const {
            Some(f) => f,
            None => {
                let prob = self.prob;
                let d = prob.d;
                let node = self.computed[pos];
                let x = self.grid.point(node);
                let mut p = [0.0; MAX_DIM];
                for a in 0..d {
                    let (hi, lo, c) = st.grad[a];
                    p[a] = c * (values[hi as usize] - values[lo as usize]);
                }
                let mut z = [0.0; MAX_DIM];
                for k in 0..d {
                    z[k] = (0..d).map(|i| p[i] * st.sigma[i * d + k]).sum();
                }
                let (ui, vi) = (pair / prob.v_grid.len(), pair % prob.v_grid.len());
                prob.running_payoff(t, &x[..d], values[node], &z[..d], ui, vi)?
            }
        };
        Ok(acc + self.dt * f)
    }

    /// One explicit step with every node holding the control pair `pair`.
    pub fn propagate_pair(&self, values: &[f64], pair: usize, t: f64) -> Result<Vec<f64>, SchemeError> {
        let updated: Vec<f64> = (0..self.computed.len())
            .into_par_iter()
            .map(|pos| {
                let st = self.stencil(pos, pair, t)?;
                self.apply(&st, pos, pair, values, t)
            })
            .collect::<Result<_, _>>()?;
        self.finish(values.len(), updated, t)
    }

    /// One explicit step of the HJBI scheme: the local game over all pair
    /// updates at every node.
    pub fn game_step(&self, values: &[f64], t: f64, combine: Combine, tol: f64) -> Result<Vec<f64>, SchemeError> {
        let (m, k) = (self.prob.u_grid.len(), self.prob.v_grid.len());
        let updated: Vec<f64> = (0..self.computed.len())
            .into_par_iter()
            .map(|pos| {
                let mut entries = Vec::with_capacity(self.pairs);
                for pair in 0..self.pairs {
                    let st = self.stencil(pos, pair, t)?;
                    entries.push(self.apply(&st, pos, pair, values, t)?);
                }
                combine_entries(m, k, entries, combine, tol)
            })
            .collect::<Result<_, _>>()?;
        self.finish(values.len(), updated, t)
    }

    fn finish(&self, len: usize, updated: Vec<f64>, t: f64) -> Result<Vec<f64>, SchemeError> {
        let mut out = vec![0.0; len];
        for (pos, v) in updated.into_iter().enumerate() {
            let node = self.computed[pos];
            if !v.is_finite() {
                return Err(SchemeError::NonFinite { node, t });
            }
            out[node] = v;
        }
        self.grid.apply_boundary(&mut out);
        Ok(out)
    }
}

/// Value of the `m × k` local game with the given entries.
pub(crate) fn combine_entries(
    m: usize,
    k: usize,
    entries: Vec<f64>,
    combine: Combine,
    tol: f64,
) -> Result<f64, SchemeError> {
    if entries.len() == 1 {
        return Ok(entries[0]);
    }
    let mat = PayoffMatrix::new(m, k, entries)?;
    Ok(match combine {
        Combine::PureLower => game::pure_minimax(&mat).0,
        Combine::PureUpper => game::pure_minimax(&mat).1,
        Combine::Relaxed(o) => game::solve_game_oriented(&mat, tol, o)?.value,
    })
}
