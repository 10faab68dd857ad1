//! Named fixtures: the domains and sets the experiments run on.

use crate::error::{invalid, Result};
use crate::geometry::grid::{GridDomain, DEFAULT_GRID_BUDGET};
use crate::geometry::ifs::{generate_prefractal, IfsSpec, DEFAULT_POINT_BUDGET};
use crate::geometry::pointset::PointSet;

fn cells(length: f64, h: f64) -> Result<usize> {
    let c = length / h;
    if (c - c.round()).abs() > 1e-6 * c.max(1.0) {
        return invalid(format!("length {length} is not a multiple of the spacing {h}"));
    }
    Ok(c.round() as usize)
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Ω = (-1,1)^n minus the origin, complement mask = the origin node.
pub fn punctured_square(n: usize, h: f64) -> Result<GridDomain> {
    let m = cells(1.0, h)?;
    let shape = vec![2 * m + 1; n];
    let mut mask = vec![false; shape.iter().product()];
    let center: usize = {
        let s = crate::geometry::grid::strides(&shape);
        s.iter().map(|st| st * m).sum()
    };
    mask[center] = true;
    GridDomain::new(vec![-1.0; n], h, shape, mask)
}

/// Parameters of the perforated disk: B(0, radius) minus the origin and the
/// balls B(w_j, 2^{-2j}), w_j = (2^{-j}, 0, ..., 0), for j_min <= j <= j_max.
/// With j_max < j_min only the origin is removed.
#[derive(Debug, Clone, PartialEq)]
pub struct PerforatedDisk {
    pub dim: usize,
    pub radius: f64,
    pub j_min: u32,
    pub j_max: u32,
    pub h: f64,
}

impl Default for PerforatedDisk {
    fn default() -> Self {
        PerforatedDisk {
            dim: 2,
            radius: 2.0,
            j_min: 2,
            j_max: 4,
            h: 1.0 / 64.0,
        }
    }
}

impl PerforatedDisk {
    pub fn holes(&self) -> Vec<(Vec<f64>, f64)> {
        (self.j_min..=self.j_max)
            .map(|j| {
                let mut w = vec![0.0; self.dim];
                w[0] = 2f64.powi(-(j as i32));
                (w, 2f64.powi(-2 * j as i32))
            })
            .collect()
    }

    pub fn build(&self) -> Result<GridDomain> {
        let m = cells(self.radius, self.h)?;
        let shape = vec![2 * m + 1; self.dim];
        let holes = self.holes();
        let r = self.radius;
        let mut g = GridDomain::from_predicate(vec![-r; self.dim], self.h, shape, DEFAULT_GRID_BUDGET, |p| {
            norm(p) >= r
                || p.iter().all(|&x| x == 0.0)
                || holes
                    .iter()
                    .any(|(w, rad)| crate::numeric::dist(p, w) <= *rad)
        })?;
        // A hole smaller than the spacing still removes its nearest node.
        let mut mask = g.mask().to_vec();
        for (w, _) in &holes {
            if let Some(i) = g.nearest_node(w) {
                mask[i] = true;
            }
        }
        g = GridDomain::new(g.origin().to_vec(), self.h, g.shape().to_vec(), mask)?;
        Ok(g)
    }
}

/// Ω = B(0, radius) \ {0} on the box [-radius, radius]^n.
pub fn punctured_ball(n: usize, radius: f64, h: f64) -> Result<GridDomain> {
    let m = cells(radius, h)?;
    GridDomain::from_predicate(vec![-radius; n], h, vec![2 * m + 1; n], DEFAULT_GRID_BUDGET, |p| {
        norm(p) >= radius || p.iter().all(|&x| x == 0.0)
    })
}

/// Ω = R^n \ B(0, radius), truncated to the box [-half_width, half_width]^n.
pub fn exterior_ball(n: usize, radius: f64, half_width: f64, h: f64) -> Result<GridDomain> {
    if !(half_width > radius) {
        return invalid("exterior_ball needs half_width > radius");
    }
    let m = cells(half_width, h)?;
    GridDomain::from_predicate(vec![-half_width; n], h, vec![2 * m + 1; n], DEFAULT_GRID_BUDGET, |p| {
        norm(p) <= radius
    })
}

/// Ω = (0, length) on the line, complement mask = the node at 0.
pub fn interval(length: f64, h: f64) -> Result<GridDomain> {
    let m = cells(length, h)?;
    let mut mask = vec![false; m + 1];
    mask[0] = true;
    GridDomain::new(vec![0.0], h, vec![m + 1], mask)
}

/// Left endpoints of the depth-k middle-thirds prefractal.
pub fn cantor_points(depth: usize) -> Result<PointSet> {
    let seed = PointSet::singleton(vec![0.0], 1.0)?;
    generate_prefractal(&IfsSpec::middle_thirds(), depth, &seed, DEFAULT_POINT_BUDGET)
}

/// Complement of the depth-k Cantor prefractal on a 3^-k grid over
/// [-pad, 1 + pad].
pub fn cantor_complement(depth: usize, pad: f64) -> Result<GridDomain> {
    let pts = cantor_points(depth)?;
    let h = 3f64.powi(-(depth as i32));
    rasterize(&pts, h, pad)
}

/// Rasterizes a point set onto the grid with spacing h covering its
/// bounding box enlarged by `pad` (rounded up to whole cells).
pub fn rasterize(pts: &PointSet, h: f64, pad: f64) -> Result<GridDomain> {
    let n = pts.ambient_dim();
    let pad_cells = (pad / h - 1e-9).ceil().max(0.0);
    let bb = pts.bbox();
    let origin: Vec<f64> = bb.lo.iter().map(|x| x - pad_cells * h).collect();
    let shape: Vec<usize> = (0..n)
        .map(|k| ((bb.hi[k] - bb.lo[k]) / h).round() as usize + 2 * pad_cells as usize + 1)
        .collect();
    let total = shape
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .unwrap_or(usize::MAX);
    if total > DEFAULT_GRID_BUDGET {
        return Err(crate::LabError::BudgetExceeded {
            what: "grid nodes",
            needed: total as u128,
            limit: DEFAULT_GRID_BUDGET as u128,
        });
    }
    let mut mask = vec![false; total];
    let probe = GridDomain::new(origin.clone(), h, shape.clone(), {
        let mut m = vec![false; total];
        m[0] = true;
        if total > 1 {
            m
        } else {
            return invalid("rasterized grid has a single node");
        }
    })?;
    for p in pts.iter() {
        let i = probe
            .nearest_node(p)
            .expect("bounding box lies inside the grid");
        mask[i] = true;
    }
    GridDomain::new(origin, h, shape, mask)
}

/// Complement of a rasterized IFS prefractal.
pub fn ifs_complement(ifs: &IfsSpec, depth: usize, seed: &PointSet, h: f64, pad: f64) -> Result<GridDomain> {
    let pts = generate_prefractal(ifs, depth, seed, DEFAULT_POINT_BUDGET)?;
    rasterize(&pts, h, pad)
}

/// Complement mask from CSV text, one node multi-index per row.
pub fn mask_csv(text: &str, origin: Vec<f64>, h: f64, shape: Vec<usize>) -> Result<GridDomain> {
    let total: usize = shape.iter().product();
    let mut mask = vec![false; total];
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.iter().any(|f| f.parse::<usize>().is_err()) {
            if line_no == 0 {
                continue; // header
            }
            return invalid(format!("mask_csv line {}: not a node index: {line}", line_no + 1));
        }
        if fields.len() != shape.len() {
            return invalid(format!(
                "mask_csv line {}: expected {} indices",
                line_no + 1,
                shape.len()
            ));
        }
        let idx: Vec<usize> = fields.iter().map(|f| f.parse().unwrap()).collect();
        if idx.iter().zip(&shape).any(|(i, s)| i >= s) {
            return invalid(format!("mask_csv line {}: index out of range", line_no + 1));
        }
        let flat = idx.iter().zip(&shape).fold(0, |acc, (i, s)| acc * s + i);
        mask[flat] = true;
    }
    GridDomain::new(origin, h, shape, mask)
}

/// The complement nodes of a grid as a point set (resolution = spacing),
/// optionally restricted to a closed ball.
pub fn complement_points(domain: &GridDomain, within: Option<(&[f64], f64)>) -> Result<PointSet> {
    let pts: Vec<Vec<f64>> = (0..domain.len())
        .filter(|&i| domain.mask()[i])
        .map(|i| domain.coords(i))
        .filter(|p| within.is_none_or(|(c, r)| crate::numeric::dist(p, c) <= r))
        .collect();
    PointSet::new(domain.dim(), pts, domain.spacing())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctured_square_has_one_masked_node() {
        let g = punctured_square(2, 0.25).unwrap();
        assert_eq!(g.shape(), &[9, 9]);
        let masked: Vec<usize> = (0..g.len()).filter(|&i| g.mask()[i]).collect();
        assert_eq!(masked.len(), 1);
        assert_eq!(g.coords(masked[0]), vec![0.0, 0.0]);
    }

    #[test]
    fn perforated_disk_masks_holes() {
        let d = PerforatedDisk {
            h: 1.0 / 64.0,
            ..Default::default()
        };
        let g = d.build().unwrap();
        for (w, _) in d.holes() {
            assert!(g.mask()[g.nearest_node(&w).unwrap()]);
        }
        assert!(g.mask()[g.nearest_node(&[0.0, 0.0]).unwrap()]);
        assert!(g.mask()[g.nearest_node(&[2.0, 0.0]).unwrap()]);
        assert!(!g.mask()[g.nearest_node(&[1.0, 1.0]).unwrap()]);
        // B_2 = B((1/4,0), 1/16) has radius 4h.
        assert!(g.mask()[g.nearest_node(&[0.25 + 0.0625, 0.0]).unwrap()]);
        assert!(!g.mask()[g.nearest_node(&[0.25 + 0.0625 + 1.0 / 64.0, 0.0]).unwrap()]);
    }

    #[test]
    fn cantor_complement_grid() {
        let g = cantor_complement(4, 1.0).unwrap();
        assert_eq!(g.shape(), &[80 + 2 * 81 + 1]);
        assert_eq!(g.mask().iter().filter(|&&m| m).count(), 16);
        assert_eq!(g.origin(), &[-1.0]);
    }

    #[test]
    fn mask_csv_parses_indices() {
        let g = mask_csv("i,j\n0,0\n2,1\n", vec![0.0, 0.0], 0.5, vec![3, 3]).unwrap();
        assert!(g.mask()[0]);
        assert!(g.mask()[7]);
        assert_eq!(g.mask().iter().filter(|&&m| m).count(), 2);
        assert!(mask_csv("0,5\n", vec![0.0, 0.0], 0.5, vec![3, 3]).is_err());
    }

    #[test]
    fn exterior_ball_masks_the_ball() {
        let g = exterior_ball(2, 1.0, 2.0, 0.25).unwrap();
        assert!(g.mask()[g.nearest_node(&[0.0, 0.0]).unwrap()]);
        assert!(g.mask()[g.nearest_node(&[1.0, 0.0]).unwrap()]);
        assert!(!g.mask()[g.nearest_node(&[1.25, 0.0]).unwrap()]);
    }
}
