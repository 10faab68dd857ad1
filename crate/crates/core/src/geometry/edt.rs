use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::grid::GridDomain;

/// Exact Euclidean distance from every node to the nearest complement node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    spacing: f64,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
}

const FAR: f64 = 1e300;

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher), in place on
/// squared distances measured in index units.
fn envelope_1d(f: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>, out: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    out.clear();
    let first = match (0..n).find(|&q| f[q] < FAR) {
        Some(q) => q,
        None => return,
    };
    v.push(first);
    z.push(f64::NEG_INFINITY);
    for q in first + 1..n {
        if f[q] >= FAR {
            continue;
        }
        loop {
            let p = *v.last().unwrap();
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            z.push(s);
            break;
        }
    }
    let mut k = 0;
    for q in 0..n {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        out.push(d * d + f[p]);
    }
    f.copy_from_slice(out);
}

/// Squared distances in index units, axis by axis.
pub(crate) fn squared_edt(shape: &[usize], seeds: &[bool]) -> Vec<f64> {
    let mut g: Vec<f64> = seeds.iter().map(|&m| if m { 0.0 } else { FAR }).collect();
    let strides = crate::geometry::grid::strides(shape);
    let total = g.len();
    for axis in 0..shape.len() {
        let len = shape[axis];
        let stride = strides[axis];
        let lines = total / len;
        // Line starts: all flat indices whose coordinate along `axis` is 0.
        let starts: Vec<usize> = (0..lines)
            .map(|l| {
                let outer = l / stride;
                let inner = l % stride;
                outer * stride * len + inner
            })
            .collect();
        let results: Vec<Vec<f64>> = starts
            .par_iter()
            .map_init(
                || (Vec::new(), Vec::new(), Vec::new()),
                |(v, z, out), &s| {
                    let mut line: Vec<f64> = (0..len).map(|t| g[s + t * stride]).collect();
                    envelope_1d(&mut line, v, z, out);
                    line
                },
            )
            .collect();
        for (s, line) in starts.iter().zip(results) {
            for (t, val) in line.into_iter().enumerate() {
                g[s + t * stride] = val;
            }
        }
    }
    g
}

pub fn distance_transform(domain: &GridDomain) -> DistanceField {
    let sq = squared_edt(domain.shape(), domain.mask());
    let h = domain.spacing();
    DistanceField {
        spacing: h,
        shape: domain.shape().to_vec(),
        values: sq.into_iter().map(|s| h * s.sqrt()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn brute(domain: &GridDomain) -> Vec<f64> {
        let masked: Vec<Vec<f64>> = (0..domain.len())
            .filter(|&i| domain.mask()[i])
            .map(|i| domain.coords(i))
            .collect();
        (0..domain.len())
            .map(|i| {
                let x = domain.coords(i);
                masked
                    .iter()
                    .map(|m| crate::numeric::dist(m, &x))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn one_dimensional_ramp() {
        let g = GridDomain::new(vec![0.0], 0.25, vec![5], vec![true, false, false, false, false]).unwrap();
        let d = distance_transform(&g);
        assert_eq!(d.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn square_boundary_mask() {
        let g = GridDomain::from_predicate(vec![0.0, 0.0], 0.25, vec![5, 5], 1 << 20, |p| {
            p.iter().any(|&x| x == 0.0 || x == 1.0)
        })
        .unwrap();
        let d = distance_transform(&g);
        assert_eq!(d.get(g.flat_index(&[2, 2])), 0.5);
    }

    #[test]
    fn matches_brute_force_3d() {
        let g = GridDomain::from_predicate(vec![0.0; 3], 0.1, vec![9, 11, 7], 1 << 20, |p| {
            ((p[0] * 13.0 + p[1] * 7.0 + p[2] * 3.0) * 10.0).round() as i64 % 17 == 0
        })
        .unwrap();
        let d = distance_transform(&g);
        for (a, b) in d.values().iter().zip(brute(&g)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
