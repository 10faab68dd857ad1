use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

pub const DEFAULT_GRID_BUDGET: usize = 1 << 24;

/// Uniform grid over a box. Nodes are stored row-major (last axis fastest).
/// `complement_mask[i]` is true when node i belongs to the complement of Ω.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    origin: Vec<f64>,
    spacing: f64,
    shape: Vec<usize>,
    complement_mask: Vec<bool>,
}

impl GridDomain {
    pub fn new(
        origin: Vec<f64>,
        spacing: f64,
        shape: Vec<usize>,
        complement_mask: Vec<bool>,
    ) -> Result<Self> {
        Self::with_budget(origin, spacing, shape, complement_mask, DEFAULT_GRID_BUDGET)
    }

    pub fn with_budget(
        origin: Vec<f64>,
        spacing: f64,
        shape: Vec<usize>,
        complement_mask: Vec<bool>,
        budget: usize,
    ) -> Result<Self> {
        if shape.is_empty() || origin.len() != shape.len() {
            return invalid("grid origin and shape must have the same nonzero length");
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return invalid(format!("grid spacing must be positive, got {spacing}"));
        }
        if shape.iter().any(|&s| s == 0) {
            return invalid("every axis needs at least one node");
        }
        let len = checked_len(&shape, budget)?;
        if complement_mask.len() != len {
            return invalid(format!(
                "mask has {} entries, grid has {len} nodes",
                complement_mask.len()
            ));
        }
        if !complement_mask.iter().any(|&m| m) {
            return invalid("complement mask is empty");
        }
        if complement_mask.iter().all(|&m| m) {
            return invalid("domain has no interior nodes");
        }
        Ok(GridDomain {
            origin,
            spacing,
            shape,
            complement_mask,
        })
    }

    /// Grid of `shape` nodes with the complement given by a predicate on
    /// node coordinates.
    pub fn from_predicate(
        origin: Vec<f64>,
        spacing: f64,
        shape: Vec<usize>,
        budget: usize,
        pred: impl Fn(&[f64]) -> bool + Sync,
    ) -> Result<Self> {
        use rayon::prelude::*;
        if shape.is_empty() || origin.len() != shape.len() {
            return invalid("grid origin and shape must have the same nonzero length");
        }
        let len = checked_len(&shape, budget)?;
        let probe = GridView {
            origin: &origin,
            spacing,
            shape: &shape,
        };
        let mask: Vec<bool> = (0..len)
            .into_par_iter()
            .map_init(
                || vec![0.0; shape.len()],
                |buf, i| {
                    probe.coords_into(i, buf);
                    pred(buf)
                },
            )
            .collect();
        Self::with_budget(origin, spacing, shape, mask, budget)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn mask(&self) -> &[bool] {
        &self.complement_mask
    }

    pub fn len(&self) -> usize {
        self.complement_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.complement_mask.is_empty()
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = i % self.shape[k];
            i /= self.shape[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        let mut buf = vec![0.0; self.dim()];
        self.view().coords_into(i, &mut buf);
        buf
    }

    pub(crate) fn view(&self) -> GridView<'_> {
        GridView {
            origin: &self.origin,
            spacing: self.spacing,
            shape: &self.shape,
        }
    }

    /// True for nodes on the outer layer of the grid box.
    pub fn is_outer(&self, i: usize) -> bool {
        self.multi_index(i)
            .iter()
            .zip(&self.shape)
            .any(|(&a, &s)| a == 0 || a + 1 == s)
    }

    /// Nearest node to `p`, or None when `p` is outside the grid box by more
    /// than half a cell.
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let t = ((p[k] - self.origin[k]) / self.spacing).round();
            if t < 0.0 || t >= self.shape[k] as f64 {
                return None;
            }
            idx.push(t as usize);
        }
        Some(self.flat_index(&idx))
    }

    /// Upper corner of the grid box.
    pub fn upper(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.shape)
            .map(|(o, s)| o + (s - 1) as f64 * self.spacing)
            .collect()
    }

    /// True when the closed ball B(x, R) lies inside the grid box.
    pub fn contains_ball(&self, x: &[f64], radius: f64) -> bool {
        let up = self.upper();
        let tol = 1e-9 * self.spacing;
        (0..self.dim()).all(|k| x[k] - radius >= self.origin[k] - tol && x[k] + radius <= up[k] + tol)
    }

    /// Flat indices of all nodes inside the closed ball B(x, R).
    pub fn nodes_in_ball(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let n = self.dim();
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for k in 0..n {
            let a = ((x[k] - radius - self.origin[k]) / self.spacing).ceil().max(0.0);
            let b = ((x[k] + radius - self.origin[k]) / self.spacing)
                .floor()
                .min((self.shape[k] - 1) as f64);
            if b < a {
                return Vec::new();
            }
            lo[k] = a as usize;
            hi[k] = b as usize;
        }
        let r2 = radius * radius;
        let mut out = Vec::new();
        let mut idx = lo.clone();
        loop {
            let d2: f64 = (0..n)
                .map(|k| {
                    let c = self.origin[k] + idx[k] as f64 * self.spacing - x[k];
                    c * c
                })
                .sum();
            if d2 <= r2 {
                out.push(self.flat_index(&idx));
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if idx[k] < hi[k] {
                    idx[k] += 1;
                    break;
                }
                idx[k] = lo[k];
            }
        }
    }
}

pub(crate) struct GridView<'a> {
    origin: &'a [f64],
    spacing: f64,
    shape: &'a [usize],
}

impl GridView<'_> {
    pub(crate) fn coords_into(&self, mut i: usize, buf: &mut [f64]) {
        for k in (0..self.shape.len()).rev() {
            buf[k] = self.origin[k] + (i % self.shape[k]) as f64 * self.spacing;
            i /= self.shape[k];
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

fn checked_len(shape: &[usize], budget: usize) -> Result<usize> {
    let needed = shape
        .iter()
        .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX);
    if needed > budget as u128 {
        return Err(LabError::BudgetExceeded {
            what: "grid nodes",
            needed,
            limit: budget as u128,
        });
    }
    Ok(needed as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trip() {
        let g = GridDomain::new(
            vec![-1.0, 0.0, 2.0],
            0.5,
            vec![3, 4, 5],
            (0..60).map(|i| i == 7).collect(),
        )
        .unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.coords(1), vec![-1.0, 0.0, 2.5]);
        assert_eq!(g.coords(5), vec![-1.0, 0.5, 2.0]);
        assert_eq!(g.nearest_node(&[-0.1, 0.6, 2.2]), Some(g.flat_index(&[2, 1, 0])));
        assert_eq!(g.strides(), vec![20, 5, 1]);
        assert!((g.cell_measure() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn invariants_enforced() {
        assert!(GridDomain::new(vec![0.0], 0.1, vec![3], vec![false; 3]).is_err());
        assert!(GridDomain::new(vec![0.0], 0.1, vec![3], vec![true; 3]).is_err());
        assert!(GridDomain::new(vec![0.0], -0.1, vec![3], vec![true, false, false]).is_err());
        let err = GridDomain::with_budget(vec![0.0, 0.0], 0.1, vec![100, 100], vec![], 1000).unwrap_err();
        assert!(matches!(err, LabError::BudgetExceeded { .. }));
    }

    #[test]
    fn ball_enumeration_matches_scan() {
        let g = GridDomain::from_predicate(vec![-1.0, -1.0], 0.125, vec![17, 17], 1 << 20, |p| {
            p[0] == 0.0 && p[1] == 0.0
        })
        .unwrap();
        let x = [0.3, -0.2];
        let got = g.nodes_in_ball(&x, 0.45);
        let want: Vec<usize> = (0..g.len())
            .filter(|&i| crate::numeric::dist(&g.coords(i), &x) <= 0.45)
            .collect();
        assert_eq!(got, want);
    }
}
