use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::geometry::pointset::{BBox, PointSet};
use crate::numeric::dist;

pub const DEFAULT_POINT_BUDGET: usize = 1_000_000;

/// x ↦ ratio · rotation · x + translation
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub ratio: f64,
    /// Row-major orthogonal matrix.
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl Similarity {
    pub fn scaling(ratio: f64, translation: Vec<f64>) -> Self {
        let n = translation.len();
        let rotation = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Similarity {
            ratio,
            rotation,
            translation,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rotation
            .iter()
            .zip(&self.translation)
            .map(|(row, t)| self.ratio * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + t)
            .collect()
    }

    /// The unique fixed point, from (I - sR) c = t.
    fn fixed_point(&self) -> Vec<f64> {
        let n = self.translation.len();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n)
                    .map(|j| (i == j) as u8 as f64 - self.ratio * self.rotation[i][j])
                    .collect();
                row.push(self.translation[i]);
                row
            })
            .collect();
        // I - sR is invertible for s < 1; partial pivoting is plenty here.
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for row in 0..n {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSpec {
    pub ambient_dim: usize,
    pub maps: Vec<Similarity>,
}

impl IfsSpec {
    pub fn new(ambient_dim: usize, maps: Vec<Similarity>) -> Result<Self> {
        let s = IfsSpec { ambient_dim, maps };
        s.validate()?;
        Ok(s)
    }

    /// {x/3, x/3 + 2/3}
    pub fn middle_thirds() -> Self {
        IfsSpec {
            ambient_dim: 1,
            maps: vec![
                Similarity::scaling(1.0 / 3.0, vec![0.0]),
                Similarity::scaling(1.0 / 3.0, vec![2.0 / 3.0]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ambient_dim;
        if n == 0 {
            return invalid("IFS ambient dimension must be >= 1");
        }
        if self.maps.is_empty() {
            return invalid("IFS needs at least one map");
        }
        for (k, m) in self.maps.iter().enumerate() {
            if !(m.ratio > 0.0 && m.ratio < 1.0) {
                return invalid(format!("map {k}: ratio {} not in (0,1)", m.ratio));
            }
            if m.translation.len() != n || m.rotation.len() != n || m.rotation.iter().any(|r| r.len() != n) {
                return invalid(format!("map {k}: dimension mismatch"));
            }
            for i in 0..n {
                for j in 0..n {
                    let g: f64 = (0..n).map(|l| m.rotation[l][i] * m.rotation[l][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (g - want).abs() > 1e-9 {
                        return invalid(format!("map {k}: rotation is not orthogonal"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn max_ratio(&self) -> f64 {
        self.maps.iter().map(|m| m.ratio).fold(0.0, f64::max)
    }

    /// Outer bounding box of the attractor.
    ///
    /// Starts from the box of B(c, ρ), with c the fixed point of the first map
    /// and ρ = max |f_i(c) - c| / (1 - s_max), and iterates the Hutchinson
    /// operator on boxes. Every iterate still contains the attractor.
    pub fn attractor_bbox(&self) -> BBox {
        let n = self.ambient_dim;
        let c = self.maps[0].fixed_point();
        let smax = self.max_ratio();
        let rho = self
            .maps
            .iter()
            .map(|m| dist(&m.apply(&c), &c))
            .fold(0.0, f64::max)
            / (1.0 - smax);
        let mut b = BBox {
            lo: c.iter().map(|x| x - rho).collect(),
            hi: c.iter().map(|x| x + rho).collect(),
        };
        for _ in 0..2000 {
            let mut corners = Vec::with_capacity(self.maps.len() << n);
            for f in &self.maps {
                for mask in 0..(1usize << n) {
                    let corner: Vec<f64> = (0..n)
                        .map(|k| if mask >> k & 1 == 1 { b.hi[k] } else { b.lo[k] })
                        .collect();
                    corners.push(f.apply(&corner));
                }
            }
            let nb = BBox::of_points(n, corners.iter().map(|p| p.as_slice())).unwrap();
            // Intersect so the sequence is monotone.
            let nb = BBox {
                lo: nb.lo.iter().zip(&b.lo).map(|(a, x)| a.max(*x)).collect(),
                hi: nb.hi.iter().zip(&b.hi).map(|(a, x)| a.min(*x)).collect(),
            };
            let change = nb
                .lo
                .iter()
                .zip(&b.lo)
                .chain(nb.hi.iter().zip(&b.hi))
                .fold(0.0f64, |m, (a, x)| m.max((a - x).abs()));
            b = nb;
            if change <= 1e-16 * rho.max(1.0) {
                break;
            }
        }
        // Rounding in the corner images can shave an ulp off the true box.
        let ulp = 8.0 * f64::EPSILON * b.lo.iter().chain(&b.hi).fold(rho, |m, x| m.max(x.abs()));
        for k in 0..n {
            b.lo[k] -= ulp;
            b.hi[k] += ulp;
        }
        b
    }
}

/// All depth-fold compositions of the maps applied to the seed points.
///
/// Resolution is `s_max^depth × max(diam(seed bbox), diam(attractor bbox))`,
/// floored at a few ulps of the coordinate scale.
pub fn generate_prefractal(
    ifs: &IfsSpec,
    depth: usize,
    seed: &PointSet,
    point_budget: usize,
) -> Result<PointSet> {
    ifs.validate()?;
    if seed.ambient_dim() != ifs.ambient_dim {
        return invalid("seed dimension does not match the IFS");
    }
    let needed = (ifs.maps.len() as u128)
        .checked_pow(depth as u32)
        .and_then(|v| v.checked_mul(seed.len() as u128))
        .unwrap_or(u128::MAX);
    if needed > point_budget as u128 {
        return Err(LabError::BudgetExceeded {
            what: "prefractal points",
            needed,
            limit: point_budget as u128,
        });
    }
    let attractor = ifs.attractor_bbox();
    let slack = 1e-9 * attractor.diam().max(1.0);
    if let Some(p) = seed.iter().find(|p| !attractor.contains(p, slack)) {
        return invalid(format!("seed point {p:?} lies outside the attractor bounding box"));
    }

    let mut pts = seed.to_vecs();
    for _ in 0..depth {
        pts = ifs
            .maps
            .iter()
            .flat_map(|f| pts.iter().map(move |p| f.apply(p)))
            .collect();
    }
    let scale = seed.bbox().diam().max(attractor.diam());
    let coord_scale = attractor
        .lo
        .iter()
        .chain(&attractor.hi)
        .fold(1.0f64, |a, x| a.max(x.abs()));
    let floor = 64.0 * f64::EPSILON * coord_scale;
    let resolution = (ifs.max_ratio().powi(depth as i32) * scale).max(floor);
    PointSet::new(ifs.ambient_dim, pts, resolution)
}
