//! Direct quadrature of the 2D quotient, written against the formulas
//! rather than the assembled problem, for cross-checks.

use crate::geometry::GridDomain;

/// Distance to the nearest complement node, by brute force.
pub fn brute_distance(domain: &GridDomain) -> Vec<f64> {
    let comp: Vec<Vec<f64>> = (0..domain.len())
        .filter(|&i| domain.mask()[i])
        .map(|i| domain.coords(i))
        .collect();
    (0..domain.len())
        .map(|i| {
            let x = domain.coords(i);
            comp.iter()
                .map(|c| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// (numerator, denominator) for values `u` on every grid node; `pinned`
/// marks nodes outside the test space, where u must be 0.
pub fn quadrature_2d(domain: &GridDomain, d: &[f64], pinned: &[bool], u: &[f64], p: f64, beta: f64) -> (f64, f64) {
    let [nx, ny] = [domain.shape()[0], domain.shape()[1]];
    let h = domain.spacing();
    let at = |i: usize, j: usize| i * ny + j;
    let mut num = 0.0;
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let c = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            if c.iter().all(|&k| pinned[k]) {
                continue;
            }
            let [u00, u10, u01, u11] = c.map(|k| u[k]);
            let sx = ((u10 - u00).powi(2) + (u11 - u01).powi(2)) / (2.0 * h * h);
            let sy = ((u01 - u00).powi(2) + (u11 - u10).powi(2)) / (2.0 * h * h);
            let dc = c.iter().map(|&k| d[k]).sum::<f64>() / 4.0;
            let s = sx + sy;
            let g = if p == 2.0 { s } else { (s + 1e-24).powf(p / 2.0) };
            num += dc.powf(beta) * g * h * h;
        }
    }
    let mut den = 0.0;
    for k in 0..domain.len() {
        if !pinned[k] {
            den += u[k].abs().powf(p) * d[k].powf(beta - p) * h * h;
        }
    }
    (num, den)
}
