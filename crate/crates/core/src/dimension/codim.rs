use rayon::prelude::*;

use super::{extremal, DimensionEstimate, EstimateKind, Observation, ScaleProtocol, ScaleWindowSample};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{DistanceField, GridDomain};

/// Up to `max_centers` complement nodes, evenly strided in storage order.
pub fn default_centers(domain: &GridDomain, max_centers: usize) -> Vec<Vec<f64>> {
    let masked: Vec<usize> = (0..domain.len()).filter(|&i| domain.mask()[i]).collect();
    let step = masked.len().div_ceil(max_centers.max(1)).max(1);
    masked.iter().step_by(step).map(|&i| domain.coords(i)).collect()
}

pub(crate) fn check_centers(domain: &GridDomain, centers: &[Vec<f64>]) -> Result<()> {
    for c in centers {
        if c.len() != domain.dim() {
            return invalid("center dimension does not match the grid");
        }
        match domain.nearest_node(c) {
            Some(i) if domain.mask()[i] => {}
            _ => return invalid(format!("center {c:?} is not a complement node")),
        }
    }
    Ok(())
}

/// (codim_lower, codim_upper) from node-count volume ratios
/// #{y ∈ B(x,R) : d(y) < r} / #{y ∈ B(x,R)}.
///
/// Windows that leave the grid box are skipped; every inner radius must be at
/// least 2h.
pub fn codimension_estimates(
    domain: &GridDomain,
    dist: &DistanceField,
    centers: &[Vec<f64>],
    protocol: &ScaleProtocol,
) -> Result<(DimensionEstimate, DimensionEstimate)> {
    check_centers(domain, centers)?;
    let h = domain.spacing();
    let pairs = protocol.pairs();
    if let Some(&(_, small)) = pairs.iter().find(|&&(_, s)| s < 2.0 * h * (1.0 - 1e-12)) {
        return Err(LabError::SubResolution {
            scale: small,
            resolution: 2.0 * h,
        });
    }
    let jobs: Vec<(&Vec<f64>, f64)> = centers
        .iter()
        .flat_map(|c| protocol.outer_radii.iter().map(move |&big| (c, big)))
        .filter(|&(c, big)| domain.contains_ball(c, big) && pairs.iter().any(|&(b, _)| b == big))
        .collect();
    let samples: Vec<ScaleWindowSample> = jobs
        .par_iter()
        .flat_map_iter(|&(c, big)| {
            let mut d: Vec<f64> = domain
                .nodes_in_ball(c, big)
                .into_iter()
                .map(|i| dist.get(i))
                .collect();
            d.sort_by(f64::total_cmp);
            let total = d.len() as f64;
            pairs
                .iter()
                .filter(move |&&(b, _)| b == big)
                .map(move |&(_, small)| {
                    let inside = d.partition_point(|&v| v < small) as f64;
                    ScaleWindowSample {
                        center: c.clone(),
                        outer: big,
                        inner: small,
                        observation: Observation::VolumeRatio(inside / total),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    if samples.is_empty() {
        return invalid("no admissible window fits inside the grid");
    }
    Ok((
        extremal(EstimateKind::CodimLower, &samples, protocol.scale_ratio_min, false)?,
        extremal(EstimateKind::CodimUpper, &samples, protocol.scale_ratio_min, true)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::cantor_complement;
    use crate::geometry::distance_transform;

    #[test]
    fn point_in_the_plane() {
        let h = 1.0 / 256.0;
        let g = crate::geometry::builders::punctured_square(2, h).unwrap();
        let d = distance_transform(&g);
        let p = ScaleProtocol::geometric(1.0, 2.0, 0..=1, 3..=6, 8.0);
        let (lo, up) = codimension_estimates(&g, &d, &[vec![0.0, 0.0]], &p).unwrap();
        assert!((lo.value - 2.0).abs() < 0.1, "{}", lo.value);
        assert!((up.value - 2.0).abs() < 0.1, "{}", up.value);
    }

    #[test]
    fn segment_in_the_plane() {
        let h = 1.0 / 128.0;
        let g = GridDomain::from_predicate(vec![-1.0, -1.0], h, vec![385, 257], 1 << 24, |p| {
            p[1] == 0.0 && (0.0..=1.0).contains(&p[0])
        })
        .unwrap();
        let d = distance_transform(&g);
        let centers = vec![vec![0.5, 0.0]];
        let p = ScaleProtocol::geometric(0.5, 2.0, 0..=0, 3..=5, 8.0);
        let (lo, up) = codimension_estimates(&g, &d, &centers, &p).unwrap();
        assert!((lo.value - 1.0).abs() < 0.15, "{}", lo.value);
        assert!((up.value - 1.0).abs() < 0.15, "{}", up.value);
    }

    #[test]
    fn cantor_codimension() {
        let g = cantor_complement(8, 1.0).unwrap();
        let d = distance_transform(&g);
        let centers = default_centers(&g, 256);
        let p = ScaleProtocol::geometric(1.0, 3.0, 0..=4, 1..=6, 27.0);
        let (lo, up) = codimension_estimates(&g, &d, &centers, &p).unwrap();
        let want = 1.0 - 2f64.ln() / 3f64.ln();
        assert!((lo.value - want).abs() < 0.1, "{}", lo.value);
        assert!((up.value - want).abs() < 0.1, "{}", up.value);
    }

    #[test]
    fn rejects_fine_scales() {
        let g = cantor_complement(4, 1.0).unwrap();
        let d = distance_transform(&g);
        let p = ScaleProtocol::geometric(1.0, 3.0, 0..=0, 4..=4, 8.0);
        assert!(matches!(
            codimension_estimates(&g, &d, &[vec![0.0]], &p),
            Err(LabError::SubResolution { .. })
        ));
    }
}
