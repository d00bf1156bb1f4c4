//! Independent matrix-game oracle: each player's LP solved by a separate
//! solver crate, cross-checked by best responses, plus a fictitious-play
//! bracket that holds regardless of any LP.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem as Lp};
use mixedvalue::game::PayoffMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    /// Fictitious-play lower and upper bounds.
    pub bracket: (f64, f64),
    /// Whether the two LP strategies guarantee values within 1e-9.
    pub certified: bool,
}

/// Brown–Robinson fictitious play with simultaneous updates; returns the
/// empirical frequencies and the bracket `[min_j (xᵀM)_j, max_i (My)_i]`.
pub fn fictitious_play(m: &PayoffMatrix, iters: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let (r, c) = (m.rows(), m.cols());
    let mut row_payoff = vec![0.0; r]; // Σ_t M[i, j_t]
    let mut col_payoff = vec![0.0; c]; // Σ_t M[i_t, j]
    let mut row_count = vec![0usize; r];
    let mut col_count = vec![0usize; c];
    let (mut i, mut j) = (0usize, 0usize);
    for _ in 0..iters {
        row_count[i] += 1;
        col_count[j] += 1;
        for (a, p) in row_payoff.iter_mut().enumerate() {
            *p += m.get(a, j);
        }
        for (b, p) in col_payoff.iter_mut().enumerate() {
            *p += m.get(i, b);
        }
        i = argmax(&row_payoff);
        j = argmin(&col_payoff);
    }
    let x: Vec<f64> = row_count.iter().map(|&n| n as f64 / iters as f64).collect();
    let y: Vec<f64> = col_count.iter().map(|&n| n as f64 / iters as f64).collect();
    let (lo, hi) = (guarantee_row(m, &x), guarantee_col(m, &y));
    (x, y, lo, hi)
}

fn argmax(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn argmin(v: &[f64]) -> usize {
    (1..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

/// `min_j (xᵀM)_j`: what the row strategy `x` secures.
pub fn guarantee_row(m: &PayoffMatrix, x: &[f64]) -> f64 {
    (0..m.cols())
        .map(|b| (0..m.rows()).map(|a| x[a] * m.get(a, b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `max_i (My)_i`: what the column strategy `y` concedes.
pub fn guarantee_col(m: &PayoffMatrix, y: &[f64]) -> f64 {
    (0..m.rows())
        .map(|a| (0..m.cols()).map(|b| y[b] * m.get(a, b)).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal strategy of the maximizing row player of `rows × cols` payoff
/// `entry(i, j)`: maximize `v` subject to `Σ_i x_i entry(i, j) ≥ v`.
fn maximin_lp(rows: usize, cols: usize, entry: impl Fn(usize, usize) -> f64) -> Option<Vec<f64>> {
    let mut lp = Lp::new(OptimizationDirection::Maximize);
    let x: Vec<_> = (0..rows).map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let v = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for j in 0..cols {
        let mut expr: Vec<_> = (0..rows).map(|i| (x[i], entry(i, j))).collect();
        expr.push((v, -1.0));
        lp.add_constraint(expr, ComparisonOp::Ge, 0.0);
    }
    lp.add_constraint(x.iter().map(|&xi| (xi, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    let sol = lp.solve().ok()?;
    let w: Vec<f64> = x.iter().map(|&xi| sol[xi].max(0.0)).collect();
    let total: f64 = w.iter().sum();
    Some(w.into_iter().map(|p| p / total).collect())
}

/// Value of `m` from an external LP code, bracketed by fictitious play.
pub fn oracle_value(m: &PayoffMatrix, fp_iters: usize) -> OracleValue {
    let (_, _, lo, hi) = fictitious_play(m, fp_iters);
    let (r, c) = (m.rows(), m.cols());
    let x = maximin_lp(r, c, |i, j| m.get(i, j));
    let y = maximin_lp(c, r, |j, i| -m.get(i, j));
    match (x, y) {
        (Some(x), Some(y)) => {
            let (vx, vy) = (guarantee_row(m, &x), guarantee_col(m, &y));
            OracleValue { value: 0.5 * (vx + vy), bracket: (lo, hi), certified: (vy - vx).abs() <= 1e-9 }
        }
        _ => OracleValue { value: 0.5 * (lo + hi), bracket: (lo, hi), certified: false },
    }
}
