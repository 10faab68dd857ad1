use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{quotient, Boundary, Discretization, HardyProblem};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{squared_edt, GridDomain};
use crate::numeric::dist;

/// Explicit test functions whose quotients bound the discrete infimum from
/// above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum WitnessFamily {
    /// 0 on B(c, a), linear ramp to 1 on the annulus a ≤ |x - c| ≤ 2a, with
    /// a = 2^{-j-1}; cut off near every other complement feature.
    Shell { center: Vec<f64>, j: u32 },
    /// ln(|x - c|/a) / ln(b/a) clamped to [0, 1], a = 2^{-j}; b defaults to
    /// half the distance from c to the nearest other feature.
    Log { center: Vec<f64>, j: u32, outer: Option<f64> },
    /// min(1, max(0, 2 - |x - c|/r)); 2B must avoid the complement.
    Plateau { center: Vec<f64>, radius: f64 },
}

impl WitnessFamily {
    pub fn name(&self) -> &'static str {
        match self {
            WitnessFamily::Shell { .. } => "shell",
            WitnessFamily::Log { .. } => "log",
            WitnessFamily::Plateau { .. } => "plateau",
        }
    }
}

/// Builds the problem on `domain` with pinned box boundary and evaluates the
/// witness quotient.
pub fn witness_quotient(domain: &GridDomain, family: &WitnessFamily, p: f64, beta: f64) -> Result<f64> {
    let problem = HardyProblem::new(domain.clone(), p, beta)?;
    problem.witness_quotient(family)
}

impl HardyProblem {
    pub fn witness_quotient(&self, family: &WitnessFamily) -> Result<f64> {
        let u = self.witness_function(family)?;
        Ok(quotient(self, &u)?.2)
    }

    /// Free-node values of the witness.
    pub fn witness_function(&self, family: &WitnessFamily) -> Result<Vec<f64>> {
        if let WitnessFamily::Plateau { center, radius } = family {
            return plateau(self, center, *radius);
        }
        let cutoffs = Cutoffs::new(self, family_center(family))?;
        cutoffs.function(self, family)
    }

    /// Shell quotients for each j, sharing the cutoff construction.
    pub fn shell_values(&self, center: &[f64], js: &[u32]) -> Result<Vec<(u32, f64)>> {
        let cutoffs = Cutoffs::new(self, center)?;
        js.iter()
            .map(|&j| {
                let fam = WitnessFamily::Shell {
                    center: center.to_vec(),
                    j,
                };
                let u = cutoffs.function(self, &fam)?;
                Ok((j, quotient(self, &u)?.2))
            })
            .collect()
    }
}

fn family_center(family: &WitnessFamily) -> &[f64] {
    match family {
        WitnessFamily::Shell { center, .. }
        | WitnessFamily::Log { center, .. }
        | WitnessFamily::Plateau { center, .. } => center,
    }
}

/// A decreasing sequence of witness quotients certifies decay toward zero
/// when 1/Q keeps growing at a non-vanishing rate: the smallest increment is
/// at least [`DECAY_RATIO`] times the largest. A sequence leveling off at a
/// positive value has geometrically shrinking increments and is not
/// certified.
pub fn certifies_decay(values: &[f64]) -> bool {
    if values.len() < 3 || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return false;
    }
    if values.windows(2).any(|w| !(w[1] < w[0])) {
        return false;
    }
    let inc: Vec<f64> = values.windows(2).map(|w| 1.0 / w[1] - 1.0 / w[0]).collect();
    let lo = inc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = inc.iter().copied().fold(0.0, f64::max);
    lo >= DECAY_RATIO * hi
}

/// Over five values, increments shrinking like 2^{-γj} pass only when
/// γ < ln(3/2) / (4 ln 2) ≈ 0.15.
pub const DECAY_RATIO: f64 = 2.0 / 3.0;

fn plateau(problem: &HardyProblem, center: &[f64], r: f64) -> Result<Vec<f64>> {
    let domain = problem.domain();
    let h = domain.spacing();
    if center.len() != domain.dim() {
        return invalid("witness center has the wrong dimension");
    }
    if r < h {
        return Err(LabError::SubResolutionWitness(format!(
            "plateau radius {r} below spacing {h}"
        )));
    }
    let support = domain.nodes_in_ball(center, 2.0 * r);
    let inside = |i: usize| dist(&domain.coords(i), center) < 2.0 * r;
    let outside = !domain.contains_ball(center, 2.0 * r)
        || (problem.boundary() == Boundary::Pinned && support.iter().any(|&i| domain.is_outer(i) && inside(i)));
    if outside {
        return invalid("plateau support 2B leaves the grid");
    }
    if support.iter().any(|&i| domain.mask()[i] && inside(i)) {
        return invalid("plateau support 2B meets the complement");
    }
    Ok(problem
        .free_nodes()
        .par_iter()
        .map(|&i| (2.0 - dist(&domain.coords(i), center) / r).clamp(0.0, 1.0))
        .collect())
}

/// Product of cutoffs vanishing near every complement feature other than the
/// one at the witness center.
struct Cutoffs {
    /// Per free node.
    factor: Vec<f64>,
    /// Radius of the center feature around the center.
    own_radius: f64,
    /// Distance from the center to the nearest other feature.
    clearance: f64,
}

impl Cutoffs {
    fn new(problem: &HardyProblem, center: &[f64]) -> Result<Self> {
        let domain = problem.domain();
        if center.len() != domain.dim() {
            return invalid("witness center has the wrong dimension");
        }
        let h = domain.spacing();
        let mask = domain.mask();
        let (labels, count) = components(domain);
        let own = match domain.nearest_node(center) {
            Some(i) if mask[i] => labels[i],
            _ => return invalid("witness center must lie on a complement node"),
        };
        let pinned_box = problem.boundary() == Boundary::Pinned;
        let mut exterior = vec![false; count];
        let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); count];
        for i in 0..domain.len() {
            if mask[i] {
                let c = labels[i];
                nodes[c].push(i);
                if domain.is_outer(i) {
                    exterior[c] = true;
                }
            }
        }
        let own_radius = nodes[own]
            .iter()
            .map(|&i| dist(&domain.coords(i), center))
            .fold(0.0, f64::max);
        if exterior[own] {
            return invalid("witness center feature reaches the grid boundary");
        }
        let mut factor = vec![1.0; problem.n_free()];
        let mut clearance = f64::INFINITY;
        // Bounded features: ramp from ρ to 2ρ around the centroid.
        for c in (0..count).filter(|&c| c != own && !exterior[c]) {
            let n = domain.dim();
            let mut centroid = vec![0.0; n];
            for &i in &nodes[c] {
                for (a, x) in centroid.iter_mut().zip(domain.coords(i)) {
                    *a += x;
                }
            }
            centroid.iter_mut().for_each(|a| *a /= nodes[c].len() as f64);
            let rho = nodes[c]
                .iter()
                .map(|&i| dist(&domain.coords(i), &centroid))
                .fold(h, f64::max);
            clearance = clearance.min(dist(&centroid, center) - rho);
            for i in domain.nodes_in_ball(&centroid, 2.0 * rho) {
                if let Some(k) = problem.slot(i) {
                    let t = dist(&domain.coords(i), &centroid) / rho - 1.0;
                    factor[k] *= t.clamp(0.0, 1.0);
                }
            }
        }
        // Exterior: ramp over half the distance from the center.
        let seeds: Vec<bool> = (0..domain.len())
            .map(|i| (mask[i] && exterior[labels[i]]) || (pinned_box && domain.is_outer(i)))
            .collect();
        if seeds.contains(&true) {
            let d2 = squared_edt(domain.shape(), &seeds);
            let d_center = h * d2[domain.nearest_node(center).unwrap()].sqrt();
            clearance = clearance.min(d_center);
            let s = 0.5 * d_center;
            factor
                .par_iter_mut()
                .zip(problem.free_nodes())
                .for_each(|(f, &i)| *f *= (h * d2[i].sqrt() / s).min(1.0));
        }
        Ok(Cutoffs {
            factor,
            own_radius,
            clearance,
        })
    }

    fn function(&self, problem: &HardyProblem, family: &WitnessFamily) -> Result<Vec<f64>> {
        let domain = problem.domain();
        let h = domain.spacing();
        let center = family_center(family);
        let radial = |f: &(dyn Fn(f64) -> f64 + Sync)| -> Vec<f64> {
            problem
                .free_nodes()
                .par_iter()
                .zip(&self.factor)
                .map(|(&i, &c)| c * f(dist(&domain.coords(i), center)))
                .collect()
        };
        let u = match family {
            WitnessFamily::Shell { j, .. } => {
                let a = 2f64.powi(-(*j as i32) - 1);
                self.check_inner(a, h)?;
                radial(&|r: f64| ((r - a) / a).clamp(0.0, 1.0))
            }
            WitnessFamily::Log { j, outer, .. } => {
                let a = 2f64.powi(-(*j as i32));
                self.check_inner(a, h)?;
                let b = outer.unwrap_or(0.5 * self.clearance);
                if !(b > a) || !b.is_finite() {
                    return invalid(format!("log witness needs outer radius > {a}, got {b}"));
                }
                let l = (b / a).ln();
                radial(&|r: f64| if r <= a { 0.0 } else { ((r / a).ln() / l).min(1.0) })
            }
            WitnessFamily::Plateau { .. } => unreachable!("plateaus need no cutoffs"),
        };
        if u.iter().all(|&x| x == 0.0) {
            return Err(LabError::ZeroTestFunction);
        }
        Ok(u)
    }

    fn check_inner(&self, a: f64, h: f64) -> Result<()> {
        if a < h {
            return Err(LabError::SubResolutionWitness(format!(
                "inner radius {a} below spacing {h}"
            )));
        }
        if self.own_radius >= a {
            return invalid(format!(
                "center feature of radius {} is not inside the inner ball of radius {a}",
                self.own_radius
            ));
        }
        Ok(())
    }
}

/// Face-connected components of the complement; labels are meaningful on
/// complement nodes only.
fn components(domain: &GridDomain) -> (Vec<usize>, usize) {
    let mask = domain.mask();
    let shape = domain.shape();
    let strides = domain.strides();
    let mut labels = vec![usize::MAX; domain.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..domain.len() {
        if !mask[start] || labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let idx = domain.multi_index(i);
            for k in 0..shape.len() {
                let mut nb = Vec::with_capacity(2);
                if idx[k] > 0 {
                    nb.push(i - strides[k]);
                }
                if idx[k] + 1 < shape[k] {
                    nb.push(i + strides[k]);
                }
                for j in nb {
                    if mask[j] && labels[j] == usize::MAX {
                        labels[j] = count;
                        queue.push_back(j);
                    }
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::{punctured_square, PerforatedDisk};
    use crate::hardy::oracle::{brute_distance, quadrature_2d};
    use crate::hardy::solve::{minimize_quotient, SolverOptions};

    #[test]
    fn plateau_matches_direct_quadrature() {
        let d = punctured_square(2, 1.0 / 16.0).unwrap();
        let bd = brute_distance(&d);
        let (c, r) = ([0.5, 0.375], 0.125);
        for (p, beta) in [(2.0, 0.0), (1.5, 0.25), (3.0, -0.5)] {
            let pr = HardyProblem::new(d.clone(), p, beta).unwrap();
            let fam = WitnessFamily::Plateau {
                center: c.to_vec(),
                radius: r,
            };
            let q = pr.witness_quotient(&fam).unwrap();
            let pinned: Vec<bool> = (0..d.len()).map(|i| pr.slot(i).is_none()).collect();
            let u: Vec<f64> = (0..d.len())
                .map(|i| {
                    let x = d.coords(i);
                    let t = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() / r;
                    if pinned[i] { 0.0 } else { (2.0 - t).clamp(0.0, 1.0) }
                })
                .collect();
            let (num, den) = quadrature_2d(&d, &bd, &pinned, &u, p, beta);
            assert!((q - num / den).abs() <= 1e-12 * q, "p={p}: {q} vs {}", num / den);
        }
    }

    #[test]
    fn plateau_support_must_avoid_the_complement() {
        let d = punctured_square(2, 1.0 / 16.0).unwrap();
        let pr = HardyProblem::new(d, 2.0, 0.0).unwrap();
        let near_origin = WitnessFamily::Plateau {
            center: vec![0.125, 0.0],
            radius: 0.125,
        };
        assert!(matches!(pr.witness_quotient(&near_origin), Err(LabError::Invalid(_))));
        let near_wall = WitnessFamily::Plateau {
            center: vec![0.875, 0.5],
            radius: 0.125,
        };
        assert!(matches!(pr.witness_quotient(&near_wall), Err(LabError::Invalid(_))));
        let tiny = WitnessFamily::Plateau {
            center: vec![0.5, 0.5],
            radius: 0.01,
        };
        assert!(matches!(pr.witness_quotient(&tiny), Err(LabError::SubResolutionWitness(_))));
    }

    #[test]
    fn shells_below_the_spacing_are_rejected() {
        let d = punctured_square(2, 1.0 / 16.0).unwrap();
        let pr = HardyProblem::new(d, 2.0, 0.0).unwrap();
        // a = 2^{-j-1} = 1/16 is resolved, 1/32 is not.
        let ok = WitnessFamily::Shell {
            center: vec![0.0, 0.0],
            j: 3,
        };
        assert!(pr.witness_quotient(&ok).is_ok());
        let fine = WitnessFamily::Shell {
            center: vec![0.0, 0.0],
            j: 4,
        };
        assert!(matches!(pr.witness_quotient(&fine), Err(LabError::SubResolutionWitness(_))));
        let log = WitnessFamily::Log {
            center: vec![0.0, 0.0],
            j: 5,
            outer: None,
        };
        assert!(matches!(pr.witness_quotient(&log), Err(LabError::SubResolutionWitness(_))));
    }

    #[test]
    fn centers_must_sit_on_a_small_complement_feature() {
        let d = punctured_square(2, 1.0 / 16.0).unwrap();
        let pr = HardyProblem::new(d, 2.0, 0.0).unwrap();
        let off = WitnessFamily::Shell {
            center: vec![0.5, 0.5],
            j: 1,
        };
        assert!(matches!(pr.witness_quotient(&off), Err(LabError::Invalid(_))));
        // The hole B((1/4, 0), 1/16) fits inside the inner ball for j = 2
        // (radius 1/8) but not for j = 3 (radius 1/16).
        let disk = PerforatedDisk {
            h: 1.0 / 64.0,
            ..Default::default()
        }
        .build()
        .unwrap();
        let pr = HardyProblem::new(disk, 2.0, 0.0).unwrap();
        let fat = WitnessFamily::Shell {
            center: vec![0.25, 0.0],
            j: 3,
        };
        assert!(matches!(pr.witness_quotient(&fat), Err(LabError::Invalid(_))));
        let thin = WitnessFamily::Shell {
            center: vec![0.25, 0.0],
            j: 2,
        };
        assert!(pr.witness_quotient(&thin).is_ok());
        assert!(witness_quotient(
            pr.domain(),
            &WitnessFamily::Shell {
                center: vec![0.0, 0.0],
                j: 4
            },
            2.0,
            0.0
        )
        .is_ok());
    }

    #[test]
    fn shells_at_the_puncture_decay_like_one_over_j() {
        let d = punctured_square(2, 1.0 / 128.0).unwrap();
        let pr = HardyProblem::with_boundary(d, Boundary::Free, 2.0, 0.0).unwrap();
        let vals = pr.shell_values(&[0.0, 0.0], &[2, 3, 4, 5, 6]).unwrap();
        for &(j, q) in &vals {
            assert!(q <= 3.0 / (j as f64 * std::f64::consts::LN_2), "j={j}: {q}");
        }
        let q: Vec<f64> = vals.iter().map(|v| v.1).collect();
        assert!(certifies_decay(&q), "{q:?}");
    }

    #[test]
    fn witnesses_bound_the_minimum_from_above() {
        let d = punctured_square(2, 1.0 / 32.0).unwrap();
        for p in [1.5, 2.0] {
            let pr = HardyProblem::new(d.clone(), p, 0.0).unwrap();
            let lam = minimize_quotient(&pr, None, &SolverOptions::default()).unwrap().lambda;
            let fams = [
                WitnessFamily::Shell {
                    center: vec![0.0, 0.0],
                    j: 2,
                },
                WitnessFamily::Log {
                    center: vec![0.0, 0.0],
                    j: 3,
                    outer: Some(0.5),
                },
                WitnessFamily::Plateau {
                    center: vec![0.5, 0.5],
                    radius: 0.125,
                },
            ];
            for f in &fams {
                assert!(lam <= pr.witness_quotient(f).unwrap(), "{} p={p}", f.name());
            }
        }
    }

    #[test]
    fn decay_certificate_separates_log_decay_from_leveling_off() {
        let harmonic: Vec<f64> = (4..=8).map(|j| 1.0 / j as f64).collect();
        assert!(certifies_decay(&harmonic));
        let leveling: Vec<f64> = (4..=8).map(|j| 0.5 + 2f64.powi(-j)).collect();
        assert!(!certifies_decay(&leveling));
        assert!(!certifies_decay(&harmonic[..2]));
        assert!(!certifies_decay(&[0.3, 0.2, 0.25]));
        assert!(!certifies_decay(&[0.3, 0.2, 0.0]));
    }

    #[test]
    fn families_round_trip_through_json() {
        let f = WitnessFamily::Log {
            center: vec![0.0, 1.0],
            j: 3,
            outer: None,
        };
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"family\":\"log\""));
        assert_eq!(serde_json::from_str::<WitnessFamily>(&s).unwrap(), f);
    }
}
