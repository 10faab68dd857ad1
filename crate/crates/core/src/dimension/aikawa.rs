use rayon::prelude::*;

use super::codim::check_centers;
use super::{DimensionEstimate, EstimateKind, Observation, ScaleWindowSample};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{DistanceField, GridDomain};

#[derive(Debug, Clone, PartialEq)]
pub struct AikawaOptions {
    pub q_lo: f64,
    pub q_hi: f64,
    /// Defaults to 10 × A(q_lo).
    pub threshold: Option<f64>,
    /// Bisection stops when the bracket is narrower than this.
    pub q_tol: f64,
    /// Number of evenly spaced q values recorded in the profile.
    pub profile_points: usize,
}

impl Default for AikawaOptions {
    fn default() -> Self {
        AikawaOptions {
            q_lo: 0.0,
            q_hi: 2.0,
            threshold: None,
            q_tol: 1e-3,
            profile_points: 21,
        }
    }
}

/// One window, compressed to distinct clamped distances and multiplicities.
struct Window {
    center: Vec<f64>,
    radius: f64,
    total: f64,
    levels: Vec<(f64, f64)>,
}

impl Window {
    fn average(&self, q: f64) -> f64 {
        self.levels
            .iter()
            .map(|&(d, m)| m * (self.radius / d).powf(q))
            .sum::<f64>()
            / self.total
    }
}

fn profile_value(windows: &[Window], q: f64) -> f64 {
    windows
        .par_iter()
        .map(|w| w.average(q))
        .reduce(|| 0.0, f64::max)
}

/// Largest q in [q_lo, q_hi] with
/// A(q) = max over windows of ⨍_{B(x,r)} (r / max(d, h/2))^q ≤ threshold.
///
/// The complement must not contain a node whose 2n axis neighbors are all in
/// the complement (a positive-measure set at grid resolution).
pub fn aikawa_critical_exponent(
    domain: &GridDomain,
    dist: &DistanceField,
    centers: &[Vec<f64>],
    radii: &[f64],
    opts: &AikawaOptions,
) -> Result<DimensionEstimate> {
    if !(opts.q_hi > opts.q_lo) {
        return invalid(format!("q_hi = {} must exceed q_lo = {}", opts.q_hi, opts.q_lo));
    }
    check_centers(domain, centers)?;
    reject_positive_measure(domain)?;
    let h = domain.spacing();
    if let Some(&r) = radii.iter().find(|&&r| r < 2.0 * h * (1.0 - 1e-12)) {
        return Err(LabError::SubResolution {
            scale: r,
            resolution: 2.0 * h,
        });
    }
    let jobs: Vec<(&Vec<f64>, f64)> = centers
        .iter()
        .flat_map(|c| radii.iter().map(move |&r| (c, r)))
        .filter(|&(c, r)| domain.contains_ball(c, r))
        .collect();
    if jobs.is_empty() {
        return invalid("no Aikawa window fits inside the grid");
    }
    let windows: Vec<Window> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let mut d: Vec<f64> = domain
                .nodes_in_ball(c, r)
                .into_iter()
                .map(|i| dist.get(i).max(h / 2.0))
                .collect();
            d.sort_by(f64::total_cmp);
            let mut levels: Vec<(f64, f64)> = Vec::new();
            for v in &d {
                match levels.last_mut() {
                    Some((last, m)) if *last == *v => *m += 1.0,
                    _ => levels.push((*v, 1.0)),
                }
            }
            Window {
                center: c.clone(),
                radius: r,
                total: d.len() as f64,
                levels,
            }
        })
        .collect();

    let base = profile_value(&windows, opts.q_lo);
    let threshold = opts.threshold.unwrap_or(10.0 * base);
    let (mut lo, mut hi) = (opts.q_lo, opts.q_hi);
    let crit = if profile_value(&windows, hi) <= threshold {
        hi
    } else if base > threshold {
        lo
    } else {
        while hi - lo > opts.q_tol {
            let mid = 0.5 * (lo + hi);
            if profile_value(&windows, mid) <= threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let steps = opts.profile_points.max(2) - 1;
    let profile: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let q = opts.q_lo + (opts.q_hi - opts.q_lo) * k as f64 / steps as f64;
            (q, profile_value(&windows, q))
        })
        .collect();
    let samples = windows
        .iter()
        .map(|w| ScaleWindowSample {
            center: w.center.clone(),
            outer: w.radius,
            inner: h / 2.0,
            observation: Observation::AikawaAverage {
                q: crit,
                value: w.average(crit),
            },
        })
        .collect();
    Ok(DimensionEstimate {
        kind: EstimateKind::Aikawa,
        value: crit,
        samples,
        scale_ratio_min: 1.0,
        profile,
    })
}

fn reject_positive_measure(domain: &GridDomain) -> Result<()> {
    let strides = domain.strides();
    let shape = domain.shape();
    let mask = domain.mask();
    for i in 0..domain.len() {
        if !mask[i] {
            continue;
        }
        let idx = domain.multi_index(i);
        let interior = (0..domain.dim()).all(|k| {
            idx[k] > 0 && idx[k] + 1 < shape[k] && mask[i - strides[k]] && mask[i + strides[k]]
        });
        if interior {
            return Err(LabError::PositiveMeasure { node: i });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::cantor_complement;
    use crate::geometry::distance_transform;

    fn origin_on_line(h: f64) -> GridDomain {
        let m = (1.0 / h).round() as usize;
        let mut mask = vec![false; 2 * m + 1];
        mask[m] = true;
        GridDomain::new(vec![-1.0], h, vec![2 * m + 1], mask).unwrap()
    }

    #[test]
    fn point_on_the_line_is_one() {
        let g = origin_on_line(2f64.powi(-12));
        let d = distance_transform(&g);
        let radii: Vec<f64> = (0..=10).map(|k| 2f64.powi(-k)).collect();
        let est = aikawa_critical_exponent(&g, &d, &[vec![0.0]], &radii, &AikawaOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "{}", est.value);
    }

    #[test]
    fn profile_is_monotone() {
        let g = cantor_complement(6, 1.0).unwrap();
        let d = distance_transform(&g);
        let centers = crate::dimension::default_centers(&g, 16);
        let radii: Vec<f64> = (0..=4).map(|k| 3f64.powi(-k)).collect();
        let est = aikawa_critical_exponent(&g, &d, &centers, &radii, &AikawaOptions::default()).unwrap();
        for w in est.profile.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn hyperplane_in_the_plane() {
        let h = 2f64.powi(-9);
        let g = GridDomain::from_predicate(vec![-1.0, -1.0], h, vec![1025, 1025], 1 << 24, |p| p[1] == 0.0).unwrap();
        let d = distance_transform(&g);
        let radii: Vec<f64> = (1..=7).map(|k| 2f64.powi(-k)).collect();
        let est = aikawa_critical_exponent(&g, &d, &[vec![0.0, 0.0]], &radii, &AikawaOptions::default()).unwrap();
        assert!((est.value - 1.0).abs() < 0.1, "{}", est.value);
    }

    #[test]
    fn positive_measure_rejected() {
        let g = GridDomain::new(vec![0.0], 0.1, vec![6], vec![false, true, true, true, false, false]).unwrap();
        let d = distance_transform(&g);
        let err = aikawa_critical_exponent(&g, &d, &[vec![0.2]], &[0.2], &AikawaOptions::default()).unwrap_err();
        assert!(matches!(err, LabError::PositiveMeasure { node: 2 }));
    }

    #[test]
    fn bad_bracket_rejected() {
        let g = origin_on_line(0.01);
        let d = distance_transform(&g);
        let opts = AikawaOptions {
            q_lo: 1.0,
            q_hi: 1.0,
            ..Default::default()
        };
        assert!(aikawa_critical_exponent(&g, &d, &[vec![0.0]], &[0.5], &opts).is_err());
    }
}
