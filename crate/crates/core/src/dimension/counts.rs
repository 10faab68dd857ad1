use rayon::prelude::*;

use super::{extremal, DimensionEstimate, EstimateKind, Observation, ScaleProtocol, ScaleWindowSample};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{greedy_packing, Ball, PointSet};
use crate::numeric::dist;

fn check_resolution(e: &PointSet, radii: impl IntoIterator<Item = f64>) -> Result<()> {
    for r in radii {
        if r < e.resolution() {
            return Err(LabError::SubResolution {
                scale: r,
                resolution: e.resolution(),
            });
        }
    }
    Ok(())
}

/// Maximal-packing counts N(x, R, r) for every center and admitted (R, r)
/// pair. `centers` index into `E`.
pub fn covering_counts(e: &PointSet, centers: &[usize], protocol: &ScaleProtocol) -> Result<Vec<ScaleWindowSample>> {
    let pairs = protocol.pairs();
    check_resolution(e, pairs.iter().flat_map(|&(a, b)| [a, b]))?;
    if let Some(&bad) = centers.iter().find(|&&c| c >= e.len()) {
        return invalid(format!("center index {bad} out of range"));
    }
    let jobs: Vec<(usize, f64)> = centers
        .iter()
        .flat_map(|&c| protocol.outer_radii.iter().map(move |&big| (c, big)))
        .filter(|&(_, big)| pairs.iter().any(|&(b, _)| b == big))
        .collect();
    let out: Vec<Vec<ScaleWindowSample>> = jobs
        .par_iter()
        .map(|&(c, big)| {
            let x = e.point(c).to_vec();
            let cand = e.indices_in(&Ball::new(x.clone(), big));
            pairs
                .iter()
                .filter(|&&(b, _)| b == big)
                .map(|&(_, small)| ScaleWindowSample {
                    center: x.clone(),
                    outer: big,
                    inner: small,
                    observation: Observation::Count(greedy_packing(e, &cand, small).len()),
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

pub fn assouad_upper(samples: &[ScaleWindowSample], scale_ratio_min: f64) -> Result<DimensionEstimate> {
    extremal(EstimateKind::AssouadUpper, &count_samples(samples), scale_ratio_min, true)
}

pub fn assouad_lower(samples: &[ScaleWindowSample], scale_ratio_min: f64) -> Result<DimensionEstimate> {
    extremal(EstimateKind::AssouadLower, &count_samples(samples), scale_ratio_min, false)
}

fn count_samples(samples: &[ScaleWindowSample]) -> Vec<ScaleWindowSample> {
    samples
        .iter()
        .filter(|s| matches!(s.observation, Observation::Count(_)))
        .cloned()
        .collect()
}

/// Whole-set covering counts, anchored at the lexicographically first point
/// x0 with R0 = max |x - x0| over E. For a singleton R0 is taken as
/// `max(inner) · scale_ratio_min`.
pub fn global_samples(e: &PointSet, inner_radii: &[f64], scale_ratio_min: f64) -> Result<Vec<ScaleWindowSample>> {
    let x0 = e.point(0);
    let far = e.iter().map(|p| dist(p, x0)).fold(0.0, f64::max);
    let big = if far > 0.0 {
        far
    } else {
        inner_radii.iter().cloned().fold(0.0, f64::max) * scale_ratio_min
    };
    let protocol = ScaleProtocol {
        outer_radii: vec![big],
        inner_radii: inner_radii.to_vec(),
        scale_ratio_min,
    };
    covering_counts(e, &[0], &protocol)
}

/// (lower, upper) Minkowski estimates from whole-set samples: min and max of
/// log N(r) / log(R0 / r).
pub fn minkowski_estimates(
    global: &[ScaleWindowSample],
    scale_ratio_min: f64,
) -> Result<(DimensionEstimate, DimensionEstimate)> {
    let s = count_samples(global);
    Ok((
        extremal(EstimateKind::MinkowskiLower, &s, scale_ratio_min, false)?,
        extremal(EstimateKind::MinkowskiUpper, &s, scale_ratio_min, true)?,
    ))
}

/// Greedy upper estimate of the normalized content density
/// H^q_R(E ∩ B(w,R)) · R^q / μ(B(w,R)).
///
/// For each cover scale s ≤ R the 2·(s/2)-balls of a maximal (s/2)-packing
/// cover E ∩ B(w,R), which gives N · (s/R)^{n-q}. The single ball B(w,R)
/// (value 1) is always a candidate.
pub fn content_density_upper(e: &PointSet, q: f64, window: &Ball, cover_scales: &[f64]) -> Result<f64> {
    if !(q >= 0.0) {
        return invalid(format!("content exponent must be >= 0, got {q}"));
    }
    let n = e.ambient_dim() as i32;
    let big = window.radius;
    let cand = e.indices_in(window);
    if cand.is_empty() {
        return Err(LabError::EmptyWindow {
            center: window.center.clone(),
            radius: big,
        });
    }
    let mut best: f64 = 1.0;
    for &s in cover_scales {
        if !(s > 0.0 && s <= big) {
            return invalid(format!("cover scale {s} must lie in (0, {big}]"));
        }
        let count = greedy_packing(e, &cand, s / 2.0).len() as f64;
        best = best.min(count * (s / big).powf(n as f64 - q));
    }
    Ok(best)
}
