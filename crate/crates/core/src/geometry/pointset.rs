use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::dist2;

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BBox {
    pub fn of_points<'a>(dim: usize, pts: impl Iterator<Item = &'a [f64]>) -> Option<BBox> {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut any = false;
        for p in pts {
            any = true;
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        any.then_some(BBox { lo, hi })
    }

    pub fn diam(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, p: &[f64], slack: f64) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (lo, hi))| *x >= lo - slack && *x <= hi + slack)
    }
}

/// Closed Euclidean ball. Membership uses `<=`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        dist2(&self.center, p) <= self.radius * self.radius
    }
}

/// Finite point set in R^n, stored flat and sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    ambient_dim: usize,
    coords: Vec<f64>,
    resolution: f64,
    bbox: BBox,
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn cell_key(p: &[f64], size: f64) -> Vec<i64> {
    p.iter().map(|x| (x / size).floor() as i64).collect()
}

/// Visits all 3^n neighbor cells of `key`.
pub(crate) fn for_neighbor_cells(key: &[i64], mut f: impl FnMut(&[i64]) -> bool) -> bool {
    let n = key.len();
    let mut off = vec![-1i64; n];
    let mut probe = vec![0i64; n];
    loop {
        for k in 0..n {
            probe[k] = key[k] + off[k];
        }
        if f(&probe) {
            return true;
        }
        let mut k = 0;
        loop {
            if k == n {
                return false;
            }
            off[k] += 1;
            if off[k] <= 1 {
                break;
            }
            off[k] = -1;
            k += 1;
        }
    }
}

impl PointSet {
    /// Builds a point set from coordinate tuples. Points closer than
    /// `resolution / 2` to an earlier (lexicographically smaller) point are
    /// dropped.
    pub fn new(ambient_dim: usize, points: Vec<Vec<f64>>, resolution: f64) -> Result<Self> {
        if ambient_dim == 0 {
            return invalid("ambient dimension must be >= 1");
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return invalid(format!("resolution must be positive, got {resolution}"));
        }
        if points.is_empty() {
            return invalid("point set must be nonempty");
        }
        for p in &points {
            if p.len() != ambient_dim {
                return invalid(format!(
                    "point {p:?} has {} coordinates, expected {ambient_dim}",
                    p.len()
                ));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return invalid(format!("non-finite point {p:?}"));
            }
        }
        let mut points = points;
        points.sort_by(|a, b| lex_cmp(a, b));

        let min_sep = resolution / 2.0;
        let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for p in points {
            let key = cell_key(&p, min_sep);
            let clash = for_neighbor_cells(&key, |c| {
                grid.get(c)
                    .is_some_and(|ids| ids.iter().any(|&i| dist2(&kept[i], &p) < min_sep * min_sep))
            });
            if !clash {
                grid.entry(key).or_default().push(kept.len());
                kept.push(p);
            }
        }
        let bbox = BBox::of_points(ambient_dim, kept.iter().map(|p| p.as_slice()))
            .expect("nonempty");
        Ok(PointSet {
            ambient_dim,
            coords: kept.into_iter().flatten().collect(),
            resolution,
            bbox,
        })
    }

    pub fn singleton(point: Vec<f64>, resolution: f64) -> Result<Self> {
        let n = point.len();
        PointSet::new(n, vec![point], resolution)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.ambient_dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.ambient_dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(|p| p.to_vec()).collect()
    }

    /// Indices (in lexicographic order) of the points inside `window`.
    pub fn indices_in(&self, window: &Ball) -> Vec<usize> {
        (0..self.len()).filter(|&i| window.contains(self.point(i))).collect()
    }

    /// Index of a point within `resolution / 2` of `p`, if any.
    pub fn find(&self, p: &[f64]) -> Option<usize> {
        let tol = self.resolution / 2.0;
        (0..self.len()).find(|&i| dist2(self.point(i), p) <= tol * tol)
    }

    /// Diameter of the point set (exact, O(N^2) beyond a few thousand points
    /// falls back to the bbox diagonal).
    pub fn diam(&self) -> f64 {
        if self.len() > 4096 {
            return self.bbox.diam();
        }
        let mut best = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(dist2(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }
}
