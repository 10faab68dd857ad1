use std::collections::HashMap;

use crate::error::{invalid, LabError, Result};
use crate::geometry::pointset::{for_neighbor_cells, Ball, PointSet};
use crate::numeric::dist2;

/// Greedy maximal r-packing of `E ∩ window`, returned as indices into `E`.
///
/// Candidates are scanned in lexicographic order and a candidate is accepted
/// when it is farther than `2r` from every accepted center, so the closed
/// r-balls are pairwise disjoint and the closed 2r-balls cover the window.
pub fn maximal_packing_indices(e: &PointSet, r: f64, window: &Ball) -> Result<Vec<usize>> {
    if !(r > 0.0) {
        return invalid(format!("packing radius must be positive, got {r}"));
    }
    if window.center.len() != e.ambient_dim() {
        return invalid("window dimension does not match the point set");
    }
    let cand = e.indices_in(window);
    if cand.is_empty() {
        return Err(LabError::EmptyWindow {
            center: window.center.clone(),
            radius: window.radius,
        });
    }
    Ok(greedy(e, &cand, r))
}

pub(crate) fn greedy(e: &PointSet, cand: &[usize], r: f64) -> Vec<usize> {
    let sep2 = 4.0 * r * r;
    let cell = 2.0 * r;
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut centers = Vec::new();
    for &i in cand {
        let p = e.point(i);
        let key: Vec<i64> = p.iter().map(|x| (x / cell).floor() as i64).collect();
        let blocked = for_neighbor_cells(&key, |c| {
            grid.get(c)
                .is_some_and(|ids| ids.iter().any(|&j| dist2(e.point(j), p) <= sep2))
        });
        if !blocked {
            grid.entry(key).or_default().push(i);
            centers.push(i);
        }
    }
    centers
}

/// Greedy maximal r-packing of `E ∩ window`, returned as center coordinates.
pub fn maximal_packing(e: &PointSet, r: f64, window: &Ball) -> Result<Vec<Vec<f64>>> {
    Ok(maximal_packing_indices(e, r, window)?
        .into_iter()
        .map(|i| e.point(i).to_vec())
        .collect())
}
