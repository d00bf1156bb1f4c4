use serde::{Deserialize, Serialize};

use crate::problem::{BoundaryMode, Problem, MAX_DIM};

/// Uniform tensor grid on the problem's box, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceGrid {
    pub d: usize,
    pub n: [usize; MAX_DIM],
    pub min: [f64; MAX_DIM],
    pub h: [f64; MAX_DIM],
    pub boundary: BoundaryMode,
}

impl SpaceGrid {
    /// `nx` nodes along every axis.
    pub fn new(prob: &Problem, nx: usize) -> SpaceGrid {
        assert!(nx >= 3, "a grid needs at least 3 nodes per axis");
        let mut n = [1; MAX_DIM];
        let mut min = [0.0; MAX_DIM];
        let mut h = [1.0; MAX_DIM];
        for i in 0..prob.d {
            n[i] = nx;
            min[i] = prob.domain.min[i];
            h[i] = (prob.domain.max[i] - prob.domain.min[i]) / (nx - 1) as f64;
        }
        SpaceGrid { d: prob.d, n, min, h, boundary: prob.domain.boundary }
    }

    pub fn len(&self) -> usize {
        self.n[..self.d].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of a multi-index; axis 0 varies fastest.
    #[inline]
    pub fn flat(&self, idx: [usize; MAX_DIM]) -> usize {
        if self.d == 1 {
            idx[0]
        } else {
            idx[1] * self.n[0] + idx[0]
        }
    }

    #[inline]
    pub fn multi(&self, flat: usize) -> [usize; MAX_DIM] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat % self.n[0], flat / self.n[0]]
        }
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.min[axis] + i as f64 * self.h[axis]
    }

    pub fn point(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi(flat);
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.d) {
            *xa = self.coord(a, idx[a]);
        }
        x
    }

    /// Nodes the stencil updates directly. The rest are filled by
    /// [`SpaceGrid::apply_boundary`].
    pub fn is_computed(&self, flat: usize) -> bool {
        let idx = self.multi(flat);
        (0..self.d).all(|a| match self.boundary {
            BoundaryMode::Clamp => idx[a] > 0 && idx[a] + 1 < self.n[a],
            BoundaryMode::Periodic => idx[a] + 1 < self.n[a],
        })
    }

    /// Neighbor of `idx` shifted by `offset` along each axis. Only called for
    /// computed nodes, so clamp grids never step outside.
    #[inline]
    pub fn neighbor(&self, idx: [usize; MAX_DIM], offset: [isize; MAX_DIM]) -> usize {
        let mut out = idx;
        for a in 0..self.d {
            let i = idx[a] as isize + offset[a];
            out[a] = match self.boundary {
                BoundaryMode::Clamp => i as usize,
                BoundaryMode::Periodic => {
                    let period = (self.n[a] - 1) as isize;
                    i.rem_euclid(period) as usize
                }
            };
        }
        self.flat(out)
    }

    /// Source node for a boundary node.
    fn boundary_source(&self, flat: usize) -> usize {
        let mut idx = self.multi(flat);
        for a in 0..self.d {
            idx[a] = match self.boundary {
                BoundaryMode::Clamp => idx[a].clamp(1, self.n[a] - 2),
                BoundaryMode::Periodic => {
                    if idx[a] == self.n[a] - 1 {
                        0
                    } else {
                        idx[a]
                    }
                }
            };
        }
        self.flat(idx)
    }

    /// Fills the nodes not updated by the stencil: clamp copies the nearest
    /// interior node, periodic copies the wrapped node.
    pub fn apply_boundary(&self, values: &mut [f64]) {
        for k in 0..values.len() {
            if !self.is_computed(k) {
                values[k] = values[self.boundary_source(k)];
            }
        }
    }

    /// Mask of nodes inside `window` (per-axis closed intervals).
    pub fn window_mask(&self, window: &[(f64, f64)]) -> Vec<bool> {
        (0..self.len())
            .map(|k| {
                let x = self.point(k);
                (0..self.d).all(|a| x[a] >= window[a].0 - 1e-9 && x[a] <= window[a].1 + 1e-9)
            })
            .collect()
    }

    /// Largest `|v(n') - v(n)| / h` over axis-adjacent pairs inside `mask`.
    pub fn discrete_lipschitz(&self, values: &[f64], mask: &[bool]) -> f64 {
        let mut lip = 0.0f64;
        for k in 0..self.len() {
            if !mask[k] {
                continue;
            }
            let idx = self.multi(k);
            for a in 0..self.d {
                if idx[a] + 1 < self.n[a] {
                    let mut next = idx;
                    next[a] += 1;
                    let j = self.flat(next);
                    if mask[j] {
                        lip = lip.max((values[j] - values[k]).abs() / self.h[a]);
                    }
                }
            }
        }
        lip
    }
}

/// What a [`ValueField`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldLabel {
    VMixed,
    VLowerPure,
    VUpperPure,
    WPi,
    UPi,
}

/// Values on a [`SpaceGrid`] at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub t: f64,
    pub values: Vec<f64>,
    pub label: FieldLabel,
}

impl ValueField {
    /// Maximum of `|self - other|` over nodes where `mask` is set.
    pub fn sup_diff(&self, other: &ValueField, mask: &[bool]) -> f64 {
        sup_diff(&self.values, &other.values, mask)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sup_diff(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold(0.0, |acc, ((x, y), _)| acc.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::catalog;

    #[test]
    fn clamp_grid_geometry() {
        let p = catalog("uv_running_cost").unwrap();
        let g = SpaceGrid::new(&p, 201);
        assert_eq!(g.len(), 201);
        assert!((g.h[0] - 0.05).abs() < 1e-15);
        assert_eq!(g.coord(0, 0), -5.0);
        assert!((g.coord(0, 200) - 5.0).abs() < 1e-12);
        assert!(!g.is_computed(0));
        assert!(!g.is_computed(200));
        assert!(g.is_computed(1));
        let mut v: Vec<f64> = (0..201).map(|k| k as f64).collect();
        g.apply_boundary(&mut v);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[200], 199.0);
    }

    #[test]
    fn periodic_wraps() {
        let p = catalog("heat_cosine").unwrap();
        let g = SpaceGrid::new(&p, 9);
        assert!(g.is_computed(0));
        assert!(!g.is_computed(8));
        assert_eq!(g.neighbor([0, 0], [-1, 0]), 7);
        assert_eq!(g.neighbor([7, 0], [1, 0]), 0);
        let mut v: Vec<f64> = (0..9).map(|k| k as f64).collect();
        g.apply_boundary(&mut v);
        assert_eq!(v[8], 0.0);
    }

    #[test]
    fn two_dimensional_indexing() {
        let p = catalog("heat_2d").unwrap();
        let g = SpaceGrid::new(&p, 5);
        assert_eq!(g.len(), 25);
        assert_eq!(g.flat([3, 2]), 13);
        assert_eq!(g.multi(13), [3, 2]);
        assert_eq!(g.neighbor([3, 3], [1, 1]), g.flat([0, 0]));
    }

    #[test]
    fn lipschitz_of_linear_field() {
        let p = catalog("uv_drift").unwrap();
        let g = SpaceGrid::new(&p, 241);
        let v: Vec<f64> = (0..g.len()).map(|k| 3.0 * g.point(k)[0]).collect();
        let mask = vec![true; g.len()];
        assert!((g.discrete_lipschitz(&v, &mask) - 3.0).abs() < 1e-9);
    }
}
