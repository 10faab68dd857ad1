//! Randomized invariants shared by the property suite and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

use hardylab::dimension::{assouad_lower, assouad_upper, covering_counts, global_samples, minkowski_estimates, ScaleProtocol};
use hardylab::frostman::{build_packing_tree, distribute_measure, ChildRegion};
use hardylab::geometry::{maximal_packing, Ball, GridDomain, PointSet};
use hardylab::hardy::{minimize_quotient, quotient, Discretization, HardyProblem, Method, SolverOptions};

pub const CASES: u32 = 100;

/// A 2D grid with spacing 1/8, a random complement and random exponents.
#[derive(Debug, Clone)]
pub struct GridCase {
    pub nx: usize,
    pub ny: usize,
    pub mask: Vec<bool>,
    pub p: f64,
    pub beta: f64,
    pub values: Vec<f64>,
}

impl GridCase {
    pub fn problem(&self) -> Option<HardyProblem> {
        let mut mask = self.mask.clone();
        // Keep at least one complement node off the outer layer.
        mask[(self.nx / 2) * self.ny + self.ny / 2] = true;
        let d = GridDomain::new(vec![0.0, 0.0], 0.125, vec![self.nx, self.ny], mask).ok()?;
        let pr = HardyProblem::new(d, self.p, self.beta).ok()?;
        (pr.n_free() > 0).then_some(pr)
    }

    /// Test function on the free nodes, cycling through the random values.
    pub fn function(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.values[i % self.values.len()]).collect()
    }
}

pub fn grid_case() -> impl Strategy<Value = GridCase> {
    (5usize..=24, 5usize..=24).prop_flat_map(|(nx, ny)| {
        (
            Just(nx),
            Just(ny),
            proptest::collection::vec(proptest::bool::weighted(0.1), nx * ny),
            1.1f64..3.5,
            -0.5f64..0.5,
            proptest::collection::vec(-1.0f64..1.0, 1..64),
        )
            .prop_map(|(nx, ny, mask, p, beta, values)| GridCase {
                nx,
                ny,
                mask,
                p,
                beta,
                values,
            })
    })
}

/// quotient(c·u) = quotient(u): bitwise for p = 2 and c = ±2^k, within
/// 1e-12 relative for every other (p, c).
pub fn homogeneity(case: GridCase, k: i32, negative: bool, c: f64) -> Result<(), TestCaseError> {
    let Some(pr) = case.problem() else {
        return Ok(());
    };
    let u = case.function(pr.n_free());
    let Ok((_, _, q)) = quotient(&pr, &u) else {
        return Ok(());
    };
    let pow2 = if negative { -(2f64.powi(k)) } else { 2f64.powi(k) };
    let p2 = pr.with_exponents(2.0, case.beta).unwrap();
    let q2 = quotient(&p2, &u).unwrap().2;
    let scaled: Vec<f64> = u.iter().map(|x| pow2 * x).collect();
    prop_assert_eq!(quotient(&p2, &scaled).unwrap().2.to_bits(), q2.to_bits());
    let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
    let qc = quotient(&pr, &scaled).unwrap().2;
    prop_assert!((qc - q).abs() <= 1e-12 * q.abs(), "c={} {} vs {}", c, qc, q);
    Ok(())
}

/// Descent traces never increase and end at or below the starting quotient.
pub fn descent_monotone(case: GridCase) -> Result<(), TestCaseError> {
    let Some(pr) = case.problem() else {
        return Ok(());
    };
    let u = case.function(pr.n_free());
    let Ok((_, _, q0)) = quotient(&pr, &u) else {
        return Ok(());
    };
    let opts = SolverOptions {
        method: Method::Descent,
        max_iter: 200,
        ..Default::default()
    };
    let r = minimize_quotient(&pr, Some(&u), &opts).unwrap();
    // The trace starts from the normalized initial vector.
    prop_assert!((r.trace[0] - q0).abs() <= 1e-12 * q0);
    for w in r.trace.windows(2) {
        prop_assert!(w[1] <= w[0], "{} after {}", w[1], w[0]);
    }
    prop_assert!(r.lambda <= q0 * (1.0 + 1e-12));
    Ok(())
}

pub fn point_cloud() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, n), 1..400),
        )
    })
}

/// Packing r-balls are disjoint and the 2r-balls cover E ∩ window.
pub fn packing_sandwich(n: usize, pts: Vec<Vec<f64>>, r: f64, wr: f64) -> Result<(), TestCaseError> {
    let e = PointSet::new(n, pts, 1e-9).unwrap();
    let window = Ball::new(e.point(0).to_vec(), wr);
    let centers = maximal_packing(&e, r, &window).unwrap();
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    for (i, a) in centers.iter().enumerate() {
        prop_assert!(d(a, &window.center) <= wr);
        for b in &centers[i + 1..] {
            prop_assert!(d(a, b) > 2.0 * r);
        }
    }
    for p in e.iter().filter(|p| d(p, &window.center) <= wr) {
        prop_assert!(centers.iter().any(|c| d(c, p) <= 2.0 * r), "{:?} uncovered", p);
    }
    Ok(())
}

/// On one sample set: lower Assouad ≤ lower Minkowski ≤ upper Minkowski ≤
/// upper Assouad.
pub fn dimension_chain(n: usize, pts: Vec<Vec<f64>>) -> Result<(), TestCaseError> {
    let e = PointSet::new(n, pts, 1e-9).unwrap();
    let inner: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
    let global = global_samples(&e, &inner, 4.0).unwrap();
    let (mlo, mup) = match minkowski_estimates(&global, 4.0) {
        Ok(m) => m,
        Err(_) => return Ok(()),
    };
    let protocol = ScaleProtocol {
        outer_radii: vec![1.0, 0.5, 0.25],
        inner_radii: inner,
        scale_ratio_min: 4.0,
    };
    let centers: Vec<usize> = (0..e.len()).step_by(e.len().div_ceil(16)).collect();
    let mut samples = covering_counts(&e, &centers, &protocol).unwrap();
    samples.extend(global);
    let alo = assouad_lower(&samples, 4.0).unwrap();
    let aup = assouad_upper(&samples, 4.0).unwrap();
    prop_assert!(alo.value <= mlo.value, "{} > {}", alo.value, mlo.value);
    prop_assert!(mlo.value <= mup.value);
    prop_assert!(mup.value <= aup.value, "{} > {}", mup.value, aup.value);
    Ok(())
}

/// Children's masses add up to their parent's at every internal node.
pub fn mass_conservation(n: usize, pts: Vec<Vec<f64>>, delta_inv: u32, depth: usize) -> Result<(), TestCaseError> {
    let e = PointSet::new(n, pts, 1e-9).unwrap();
    let root = e.point(0).to_vec();
    let delta = 1.0 / delta_inv as f64;
    let Ok(t) = build_packing_tree(&e, &root, 2.0, delta, depth, ChildRegion::Parent) else {
        return Ok(());
    };
    let nu = distribute_measure(&t);
    prop_assert!(nu.conservation_error(&t) <= 1e-12, "{}", nu.conservation_error(&t));
    let total: f64 = nu.leaf_masses().iter().sum();
    prop_assert!((total - 1.0).abs() <= 1e-12, "{}", total);
    Ok(())
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn flatten<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

/// Runs every suite with `CASES` cases; one (name, outcome) per suite.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "quotient homogeneity",
            flatten(runner().run(
                &(grid_case(), -30i32..30, any::<bool>(), prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3]),
                |(case, k, neg, c)| homogeneity(case, k, neg, c),
            )),
        ),
        ("descent monotonicity", flatten(runner().run(&grid_case(), descent_monotone))),
        (
            "packing/cover sandwich",
            flatten(runner().run(&(point_cloud(), 0.01f64..0.5, 0.1f64..2.0), |((n, pts), r, wr)| {
                packing_sandwich(n, pts, r, wr)
            })),
        ),
        (
            "dimension ordering chain",
            flatten(runner().run(&point_cloud(), |(n, pts)| dimension_chain(n, pts))),
        ),
        (
            "frostman mass conservation",
            flatten(runner().run(&(point_cloud(), 3u32..6, 1usize..5), |((n, pts), d, depth)| {
                mass_conservation(n, pts, d, depth)
            })),
        ),
    ]
}
