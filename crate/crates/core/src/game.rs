//! Finite two-player zero-sum matrix games in mixed strategies.
//!
//! Rows belong to the maximizer, columns to the minimizer. Entries are the
//! payoff to the maximizer. [`solve_game`] returns a saddle point
//! `(mu_star, nu_star)` together with the duality gap certifying it.
//!
//! Solution path:
//! 1. pure saddle points are detected exactly;
//! 2. 2×2 games without a pure saddle use the closed form;
//! 3. everything else goes through a dense tableau simplex on the
//!    positively shifted matrix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Tolerance for the sum of a probability vector.
const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("payoff matrix must have at least one row and one column (got {rows}x{cols})")]
    Empty { rows: usize, cols: usize },
    #[error("payoff matrix has {found} entries, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, found: usize },
    #[error("non-finite payoff entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("strategy has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid mixed strategy: {0}")]
    InvalidStrategy(String),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("solver stopped with duality gap {gap:e} above tolerance {tol:e}")]
    GapNotReached { gap: f64, tol: f64 },
}

/// Dense `rows × cols` payoff matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GameError> {
        if rows == 0 || cols == 0 {
            return Err(GameError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(GameError::Shape { rows, cols, found: data.len() });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(GameError::NonFinite { row: k / cols, col: k % cols });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GameError> {
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * k);
        for row in rows {
            if row.len() != k {
                return Err(GameError::Shape { rows: m, cols: k, found: row.len() * m });
            }
            data.extend_from_slice(row);
        }
        Self::new(m, k, data)
    }

    /// Builds a matrix from an entry function. Non-finite entries are rejected.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut entry: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, GameError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(entry(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> PayoffMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        PayoffMatrix { rows: self.cols, cols: self.rows, data }
    }

    /// `-Mᵀ`: the same game seen from the minimizer's side.
    pub fn negated_transpose(&self) -> PayoffMatrix {
        let mut t = self.transpose();
        t.data.iter_mut().for_each(|v| *v = -*v);
        t
    }

    /// `a·M + b` entrywise.
    pub fn affine(&self, a: f64, b: f64) -> PayoffMatrix {
        PayoffMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| a * v + b).collect(),
        }
    }

    fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Probability vector over a finite set of pure strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy {
    weights: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(weights: Vec<f64>) -> Result<Self, GameError> {
        if weights.is_empty() {
            return Err(GameError::InvalidStrategy("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(GameError::InvalidStrategy(format!("weight {w} is not a probability")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(GameError::InvalidStrategy(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn pure(n: usize, index: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[index] = 1.0;
        Self { weights }
    }

    /// Clips tiny negative noise and renormalizes.
    fn from_raw(mut weights: Vec<f64>) -> Self {
        weights.iter_mut().for_each(|w| *w = w.max(0.0));
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            weights.iter_mut().for_each(|w| *w /= sum);
        } else {
            let n = weights.len();
            weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
        }
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Inverse-CDF draw of a pure strategy index from `uniform ∈ [0, 1)`.
    pub fn sample(&self, uniform: f64) -> usize {
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                acc += w;
                last = i;
                if uniform < acc {
                    return i;
                }
            }
        }
        last
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = GameError;

    fn try_from(weights: Vec<f64>) -> Result<Self, Self::Error> {
        MixedStrategy::new(weights)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(s: MixedStrategy) -> Self {
        s.weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSolution {
    pub value: f64,
    pub mu_star: MixedStrategy,
    pub nu_star: MixedStrategy,
    pub duality_gap: f64,
}

impl GameSolution {
    /// What the maximizer guarantees with `mu_star` (sup-inf side).
    pub fn lower_value(&self, m: &PayoffMatrix) -> f64 {
        best_response_value(m, &self.mu_star, Side::Col).expect("shape checked at solve")
    }

    /// What the minimizer concedes with `nu_star` (inf-sup side).
    pub fn upper_value(&self, m: &PayoffMatrix) -> f64 {
        best_response_value(m, &self.nu_star, Side::Row).expect("shape checked at solve")
    }
}

/// Which player responds in [`best_response_value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The maximizer picks the best row against a column strategy.
    Row,
    /// The minimizer picks the best column against a row strategy.
    Col,
}

/// Order in which the local game is set up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Maximizer's program on `M`.
    SupInf,
    /// Minimizer's program, solved as the maximizer's program on `-Mᵀ`.
    InfSup,
}

/// Best pure response value against `strategy`.
///
/// `Side::Row` expects a column strategy and returns `max_i (M ν)_i`;
/// `Side::Col` expects a row strategy and returns `min_j (μᵀ M)_j`.
pub fn best_response_value(
    m: &PayoffMatrix,
    strategy: &MixedStrategy,
    side: Side,
) -> Result<f64, GameError> {
    let w = strategy.weights();
    match side {
        Side::Row => {
            if w.len() != m.cols {
                return Err(GameError::LengthMismatch { expected: m.cols, found: w.len() });
            }
            Ok((0..m.rows)
                .map(|i| m.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max))
        }
        Side::Col => {
            if w.len() != m.rows {
                return Err(GameError::LengthMismatch { expected: m.rows, found: w.len() });
            }
            Ok((0..m.cols)
                .map(|j| (0..m.rows).map(|i| w[i] * m.get(i, j)).sum::<f64>())
                .fold(f64::INFINITY, f64::min))
        }
    }
}

/// Pure-strategy bounds `(max_i min_j M_ij, min_j max_i M_ij)`.
pub fn pure_minimax(m: &PayoffMatrix) -> (f64, f64) {
    let lower = (0..m.rows)
        .map(|i| m.row(i).iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let upper = (0..m.cols)
        .map(|j| (0..m.rows).map(|i| m.get(i, j)).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    (lower, upper)
}

/// Solves the matrix game in mixed strategies.
pub fn solve_game(m: &PayoffMatrix, tol: f64) -> Result<GameSolution, GameError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(GameError::BadTolerance(tol));
    }
    let (mu, nu, raw_value) = if let Some(s) = pure_saddle(m) {
        s
    } else if m.rows == 2 && m.cols == 2 {
        closed_form_2x2(m)
    } else {
        simplex_saddle(m)
    };
    let lo = best_response_value(m, &mu, Side::Col)?;
    let hi = best_response_value(m, &nu, Side::Row)?;
    let duality_gap = (hi - lo).max(0.0);
    if duality_gap > tol {
        return Err(GameError::GapNotReached { gap: duality_gap, tol });
    }
    let value = raw_value.clamp(lo.min(hi), hi.max(lo));
    Ok(GameSolution { value, mu_star: mu, nu_star: nu, duality_gap })
}

/// Solves the game in the requested orientation. `InfSup` works on `-Mᵀ`
/// and maps the saddle point back.
pub fn solve_game_oriented(
    m: &PayoffMatrix,
    tol: f64,
    orientation: Orientation,
) -> Result<GameSolution, GameError> {
    match orientation {
        Orientation::SupInf => solve_game(m, tol),
        Orientation::InfSup => {
            let dual = solve_game(&m.negated_transpose(), tol)?;
            Ok(GameSolution {
                value: -dual.value,
                mu_star: dual.nu_star,
                nu_star: dual.mu_star,
                duality_gap: dual.duality_gap,
            })
        }
    }
}

fn pure_saddle(m: &PayoffMatrix) -> Option<(MixedStrategy, MixedStrategy, f64)> {
    let (lower, upper) = pure_minimax(m);
    if lower != upper {
        return None;
    }
    let row = (0..m.rows).find(|&i| m.row(i).iter().all(|&v| v >= lower))?;
    let col = (0..m.cols).find(|&j| (0..m.rows).all(|i| m.get(i, j) <= upper))?;
    Some((MixedStrategy::pure(m.rows, row), MixedStrategy::pure(m.cols, col), lower))
}

/// 2×2 game without a pure saddle. The formulas are written so that solving
/// `-Mᵀ` reproduces the same value bit for bit.
fn closed_form_2x2(m: &PayoffMatrix) -> (MixedStrategy, MixedStrategy, f64) {
    let (a, b, c, d) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let den = (a + d) - (b + c);
    let value = (a * d - b * c) / den;
    let mu = MixedStrategy::from_raw(vec![(d - c) / den, (a - b) / den]);
    let nu = MixedStrategy::from_raw(vec![(d - b) / den, (a - c) / den]);
    (mu, nu, value)
}

/// Dense tableau simplex for `max 1ᵀy s.t. (M + s)y ≤ 1, y ≥ 0` with the
/// shift `s` making every entry at least 1. The primal gives the column
/// strategy, the slack reduced costs give the row strategy.
fn simplex_saddle(m: &PayoffMatrix) -> (MixedStrategy, MixedStrategy, f64) {
    let (rows, cols) = (m.rows, m.cols);
    let shift = 1.0 - m.min_entry();
    let width = cols + rows + 1;
    let rhs = width - 1;
    let mut tab = vec![0.0; rows * width];
    for i in 0..rows {
        for j in 0..cols {
            tab[i * width + j] = m.get(i, j) + shift;
        }
        tab[i * width + cols + i] = 1.0;
        tab[i * width + rhs] = 1.0;
    }
    let mut obj = vec![0.0; width];
    obj[..cols].iter_mut().for_each(|c| *c = -1.0);
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    const EPS: f64 = 1e-12;
    let bland_after = 50 * (rows + cols);
    let max_iter = 5000 * (rows + cols);
    for iter in 0..max_iter {
        let entering = if iter < bland_after {
            let (j, r) = obj[..rhs]
                .iter()
                .enumerate()
                .fold((usize::MAX, -EPS), |best, (j, &r)| if r < best.1 { (j, r) } else { best });
            (r < -EPS).then_some(j)
        } else {
            obj[..rhs].iter().position(|&r| r < -EPS)
        };
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = tab[i * width + e];
            if a > EPS {
                let ratio = tab[i * width + rhs] / a;
                let better = match leave {
                    None => true,
                    Some((l, best)) => {
                        ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[l])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // The feasible region is bounded because every entry is ≥ 1.
        let Some((p, _)) = leave else { break };
        pivot(&mut tab, &mut obj, width, rows, p, e);
        basis[p] = e;
    }

    let z = obj[rhs];
    let mut y = vec![0.0; cols];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < cols {
            y[bv] = tab[i * width + rhs];
        }
    }
    let x: Vec<f64> = (0..rows).map(|i| obj[cols + i]).collect();
    let value = 1.0 / z - shift;
    (MixedStrategy::from_raw(x), MixedStrategy::from_raw(y), value)
}

fn pivot(tab: &mut [f64], obj: &mut [f64], width: usize, rows: usize, p: usize, e: usize) {
    let inv = 1.0 / tab[p * width + e];
    for k in 0..width {
        tab[p * width + k] *= inv;
    }
    tab[p * width + e] = 1.0;
    let pivot_row: Vec<f64> = tab[p * width..(p + 1) * width].to_vec();
    for i in 0..rows {
        if i == p {
            continue;
        }
        let factor = tab[i * width + e];
        if factor != 0.0 {
            let row = &mut tab[i * width..(i + 1) * width];
            for (r, pr) in row.iter_mut().zip(&pivot_row) {
                *r -= factor * pr;
            }
            row[e] = 0.0;
        }
    }
    let factor = obj[e];
    if factor != 0.0 {
        for (o, pr) in obj.iter_mut().zip(&pivot_row) {
            *o -= factor * pr;
        }
        obj[e] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> PayoffMatrix {
        PayoffMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn assert_optimal(m: &PayoffMatrix, s: &GameSolution, tol: f64) {
        assert!(s.duality_gap <= tol);
        for i in 0..m.rows() {
            let r: f64 = m.row(i).iter().zip(s.nu_star.weights()).map(|(a, b)| a * b).sum();
            assert!(r <= s.value + tol, "row {i}: {r} > {}", s.value);
        }
        for j in 0..m.cols() {
            let c: f64 = (0..m.rows()).map(|i| s.mu_star.weights()[i] * m.get(i, j)).sum();
            assert!(c >= s.value - tol, "col {j}: {c} < {}", s.value);
        }
    }

    #[test]
    fn matching_pennies() {
        let m = mat(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.mu_star.weights(), &[0.5, 0.5]);
        assert_eq!(s.nu_star.weights(), &[0.5, 0.5]);
        assert_eq!(pure_minimax(&m), (-1.0, 1.0));
    }

    #[test]
    fn one_by_one() {
        let m = mat(&[&[2.5]]);
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert_eq!(s.value, 2.5);
        assert_eq!(s.mu_star.weights(), &[1.0]);
        assert_eq!(s.nu_star.weights(), &[1.0]);
        assert_eq!(pure_minimax(&m), (2.5, 2.5));
        let any = MixedStrategy::pure(1, 0);
        assert_eq!(best_response_value(&m, &any, Side::Row).unwrap(), 2.5);
        assert_eq!(best_response_value(&m, &any, Side::Col).unwrap(), 2.5);
    }

    #[test]
    fn two_by_two_against_lp_oracle() {
        // scipy.optimize.linprog on both players' programs:
        // value 1.5, mu = (0.25, 0.75), nu = (0.5, 0.5)
        let m = mat(&[&[3.0, 0.0], &[1.0, 2.0]]);
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert!((s.value - 1.5).abs() < 1e-14);
        assert!((s.mu_star.weights()[0] - 0.25).abs() < 1e-14);
        assert!((s.nu_star.weights()[0] - 0.5).abs() < 1e-14);
        // simplex route on the same game, padded with a dominated row
        let padded = mat(&[&[3.0, 0.0], &[1.0, 2.0], &[-5.0, -5.0]]);
        let s = solve_game(&padded, DEFAULT_TOL).unwrap();
        assert!((s.value - 1.5).abs() < 1e-12);
        assert_optimal(&padded, &s, 1e-12);
    }

    #[test]
    fn pure_saddle_detected() {
        let m = mat(&[&[2.0, 3.0], &[0.0, 1.0]]);
        assert_eq!(pure_minimax(&m), (2.0, 2.0));
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert_eq!(s.value, 2.0);
        assert_eq!(s.mu_star.weights(), &[1.0, 0.0]);
        assert_eq!(s.nu_star.weights(), &[1.0, 0.0]);
        assert_eq!(s.duality_gap, 0.0);
    }

    #[test]
    fn best_responses() {
        let m = mat(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let half = MixedStrategy::uniform(2);
        assert_eq!(best_response_value(&m, &half, Side::Row).unwrap(), 0.0);
        let top = MixedStrategy::pure(2, 0);
        assert_eq!(best_response_value(&m, &top, Side::Col).unwrap(), -1.0);
        let three = MixedStrategy::uniform(3);
        assert!(matches!(
            best_response_value(&m, &three, Side::Row),
            Err(GameError::LengthMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(PayoffMatrix::new(0, 2, vec![]), Err(GameError::Empty { .. })));
        assert!(matches!(
            PayoffMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(GameError::NonFinite { row: 0, col: 1 })
        ));
        let m = mat(&[&[1.0]]);
        assert!(matches!(solve_game(&m, 0.0), Err(GameError::BadTolerance(_))));
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![-0.1, 1.1]).is_err());
        assert!(MixedStrategy::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn rock_paper_scissors_by_simplex() {
        let m = mat(&[&[0.0, -1.0, 1.0], &[1.0, 0.0, -1.0], &[-1.0, 1.0, 0.0]]);
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert!(s.value.abs() < 1e-14);
        for w in s.mu_star.weights().iter().chain(s.nu_star.weights()) {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_games_terminate() {
        // many ties and repeated rows
        let m = mat(&[
            &[1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
        ]);
        let s = solve_game(&m, DEFAULT_TOL).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
        assert_optimal(&m, &s, 1e-12);
        let zeros = PayoffMatrix::new(3, 4, vec![0.0; 12]).unwrap();
        assert_eq!(solve_game(&zeros, DEFAULT_TOL).unwrap().value, 0.0);
    }

    #[test]
    fn orientation_is_bitwise_stable_on_closed_forms() {
        let m = mat(&[&[0.3, -1.7], &[-0.9, 2.1]]);
        let a = solve_game_oriented(&m, DEFAULT_TOL, Orientation::SupInf).unwrap();
        let b = solve_game_oriented(&m, DEFAULT_TOL, Orientation::InfSup).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn sampling_follows_weights() {
        let s = MixedStrategy::new(vec![0.25, 0.0, 0.75]).unwrap();
        assert_eq!(s.sample(0.0), 0);
        assert_eq!(s.sample(0.2499), 0);
        assert_eq!(s.sample(0.25), 2);
        assert_eq!(s.sample(0.999999), 2);
        assert_eq!(MixedStrategy::pure(3, 1).sample(0.7), 1);
    }
}
