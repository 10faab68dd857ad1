use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{quotient, Discretization, Preconditioner};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Inverse iteration for p = 2, descent otherwise.
    Auto,
    InverseIteration,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    /// No further decrease possible in floating point.
    Stalled,
    /// Hit the iteration cap; the result is inconclusive.
    MaxIterations,
}

impl SolverStatus {
    pub fn is_conclusive(self) -> bool {
        self != SolverStatus::MaxIterations
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub method: Method,
    /// Relative change in λ that counts as stationary.
    pub tol: f64,
    /// Stationary iterations in a row needed to stop.
    pub patience: usize,
    pub max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::Auto,
            tol: 1e-8,
            patience: 5,
            max_iter: 10_000,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayleighResult {
    pub lambda: f64,
    /// 1/λ.
    pub hardy_constant: f64,
    /// Values on the free nodes, scaled so the denominator is 1.
    pub minimizer: Vec<f64>,
    pub iterations: usize,
    /// ‖∇N - λ∇D‖ / ‖λ∇D‖ at the returned vector.
    pub residual: f64,
    pub status: SolverStatus,
    pub method: Method,
    /// λ after each iteration, starting with the initial vector.
    pub trace: Vec<f64>,
}

/// Minimizes the discrete quotient N(u)/D(u) over nonzero u.
pub fn minimize_quotient<D: Discretization + ?Sized>(
    problem: &D,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<RayleighResult> {
    if !(opts.tol > 0.0) || opts.patience == 0 || opts.max_iter == 0 {
        return invalid("solver needs tol > 0, patience >= 1 and max_iter >= 1");
    }
    let u0 = match init {
        Some(u) => u.to_vec(),
        None => problem.default_init(),
    };
    quotient(problem, &u0)?;
    let method = match opts.method {
        Method::Auto if problem.p() == 2.0 => Method::InverseIteration,
        Method::Auto => Method::Descent,
        Method::InverseIteration if problem.p() != 2.0 => {
            return invalid("inverse iteration only applies to p = 2");
        }
        m => m,
    };
    let (u, trace, status) = match method {
        Method::InverseIteration => inverse_iteration(problem, u0, opts),
        _ => lbfgs(problem, u0, opts),
    };
    let n = problem.n_free();
    let (mut gn, mut gd) = (vec![0.0; n], vec![0.0; n]);
    let (num, den) = problem.parts_grad(&u, &mut gn, &mut gd);
    let lambda = num / den;
    // Measured in the Jacobi-scaled norm so strongly graded meshes do not
    // drown the residual in a few rows.
    let diag = problem.stiffness_diag();
    let mut r2 = 0.0;
    let mut d2 = 0.0;
    for ((a, b), (k, m)) in gn.iter().zip(&gd).zip(diag.iter().zip(problem.mass())) {
        let w = 1.0 / (k + m);
        r2 += w * (a - lambda * b).powi(2);
        d2 += w * (lambda * b).powi(2);
    }
    Ok(RayleighResult {
        lambda,
        hardy_constant: 1.0 / lambda,
        minimizer: u,
        iterations: trace.len() - 1,
        residual: (r2 / d2).sqrt(),
        status,
        method,
        trace,
    })
}

fn normalize<D: Discretization + ?Sized>(problem: &D, u: &mut [f64]) -> (f64, f64) {
    let (num, den) = problem.parts(u);
    let c = den.powf(-1.0 / problem.p());
    u.par_iter_mut().for_each(|x| *x *= c);
    let sign = if u.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    if sign < 0.0 {
        u.par_iter_mut().for_each(|x| *x = -*x);
    }
    (num / den, c)
}

struct Stopper {
    tol: f64,
    patience: usize,
    quiet: usize,
}

impl Stopper {
    fn stationary(&mut self, prev: f64, next: f64) -> bool {
        if (prev - next).abs() <= self.tol * next.abs() {
            self.quiet += 1;
        } else {
            self.quiet = 0;
        }
        self.quiet >= self.patience
    }
}

fn par_dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG for K x = b, warm-started from x.
fn pcg<D: Discretization + ?Sized>(problem: &D, prec: &dyn Preconditioner, b: &[f64], x: &mut [f64], rtol: f64) {
    let n = b.len();
    let mut r = vec![0.0; n];
    problem.stiffness_apply(x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
    let bnorm = par_dot(b, b).sqrt();
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = par_dot(&r, &z);
    let mut kp = vec![0.0; n];
    for _ in 0..20 * n.max(50) {
        if par_dot(&r, &r).sqrt() <= rtol * bnorm {
            break;
        }
        problem.stiffness_apply(&p, &mut kp);
        let pkp = par_dot(&p, &kp);
        if !(pkp > 0.0) {
            break;
        }
        let alpha = rz / pkp;
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&kp).for_each(|(r, k)| *r -= alpha * k);
        prec.apply(&r, &mut z);
        let rz_new = par_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
}

const PCG_RTOL: f64 = 1e-8;

/// Accepted steps between rebuilds of the frozen-weight preconditioner when
/// p ≠ 2.
const REBUILD_EVERY: usize = 20;

fn inverse_iteration<D: Discretization + ?Sized>(
    problem: &D,
    mut u: Vec<f64>,
    opts: &SolverOptions,
) -> (Vec<f64>, Vec<f64>, SolverStatus) {
    let n = u.len();
    let mass = problem.mass().to_vec();
    let prec = problem.direct_solve(&mass).is_none().then(|| problem.preconditioner(None));
    let (mut lambda, _) = normalize(problem, &mut u);
    let mut trace = vec![lambda];
    let mut stop = Stopper {
        tol: opts.tol,
        patience: opts.patience,
        quiet: 0,
    };
    let mut ku = vec![0.0; n];
    let mut kx = vec![0.0; n];
    for _ in 0..opts.max_iter {
        let b: Vec<f64> = u.iter().zip(&mass).map(|(u, m)| u * m).collect();
        let x = match &prec {
            None => problem.direct_solve(&b).unwrap(),
            Some(prec) => {
                let mut x: Vec<f64> = u.iter().map(|u| u / lambda).collect();
                pcg(problem, prec.as_ref(), &b, &mut x, PCG_RTOL);
                x
            }
        };
        let mut next = x.clone();
        let (mut lam_next, _) = normalize(problem, &mut next);
        if !(lam_next <= lambda) {
            // Rayleigh–Ritz on span{u, x} guards against inexact solves.
            problem.stiffness_apply(&u, &mut ku);
            problem.stiffness_apply(&x, &mut kx);
            let a = [par_dot(&u, &ku), par_dot(&u, &kx), par_dot(&x, &kx)];
            let bm = [
                u.iter().zip(&mass).map(|(u, m)| u * u * m).sum::<f64>(),
                u.iter().zip(&x).zip(&mass).map(|((u, x), m)| u * x * m).sum::<f64>(),
                x.iter().zip(&mass).map(|(x, m)| x * x * m).sum::<f64>(),
            ];
            if let Some((cu, cx)) = ritz_2x2(a, bm) {
                next = u.iter().zip(&x).map(|(u, x)| cu * u + cx * x).collect();
                lam_next = normalize(problem, &mut next).0;
            }
        }
        let prev = lambda;
        if !(lam_next <= lambda) {
            return (u, trace, SolverStatus::Stalled);
        }
        u = next;
        lambda = lam_next;
        trace.push(lambda);
        if stop.stationary(prev, lambda) {
            return (u, trace, SolverStatus::Converged);
        }
    }
    (u, trace, SolverStatus::MaxIterations)
}

/// Smallest generalized eigenpair of the 2×2 pencil (A, B) given as
/// [a11, a12, a22], [b11, b12, b22].
fn ritz_2x2(a: [f64; 3], b: [f64; 3]) -> Option<(f64, f64)> {
    // det(A - μB) = 0.
    let qa = b[0] * b[2] - b[1] * b[1];
    let qb = -(a[0] * b[2] + a[2] * b[0] - 2.0 * a[1] * b[1]);
    let qc = a[0] * a[2] - a[1] * a[1];
    if !(qa > 1e-14 * b[0] * b[2]) {
        return None;
    }
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    // Stable smaller root.
    let q = -0.5 * (qb + qb.signum() * disc);
    let (r1, r2) = (q / qa, qc / q);
    let mu = r1.min(r2);
    if !mu.is_finite() {
        return None;
    }
    let (m11, m12, m22) = (a[0] - mu * b[0], a[1] - mu * b[1], a[2] - mu * b[2]);
    let v = if m11.abs() + m12.abs() >= m12.abs() + m22.abs() {
        (-m12, m11)
    } else {
        (m22, -m12)
    };
    if v.0 == 0.0 && v.1 == 0.0 {
        return None;
    }
    Some(v)
}

/// Preconditioned L-BFGS on ln N - ln D with Armijo backtracking. The iterate
/// is renormalized to D = 1 after each step; stored pairs are rescaled to
/// match since the objective is 0-homogeneous.
fn lbfgs<D: Discretization + ?Sized>(
    problem: &D,
    mut u: Vec<f64>,
    opts: &SolverOptions,
) -> (Vec<f64>, Vec<f64>, SolverStatus) {
    let n = u.len();
    normalize(problem, &mut u);
    let frozen = problem.p() != 2.0;
    let mut prec = problem.preconditioner(frozen.then_some(u.as_slice()));
    let mut since_rebuild = 0;
    let mut hy = vec![0.0; n];
    let (mut gn, mut gd) = (vec![0.0; n], vec![0.0; n]);
    let eval = |u: &[f64], gn: &mut [f64], gd: &mut [f64], g: &mut [f64]| -> f64 {
        let (num, den) = problem.parts_grad(u, gn, gd);
        g.par_iter_mut()
            .zip(gn.par_iter().zip(gd.par_iter()))
            .for_each(|(g, (a, b))| *g = a / num - b / den);
        num / den
    };
    let mut g = vec![0.0; n];
    let mut lambda = eval(&u, &mut gn, &mut gd, &mut g);
    let mut trace = vec![lambda];
    let mut stop = Stopper {
        tol: opts.tol,
        patience: opts.patience,
        quiet: 0,
    };
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut fresh = true;
    for _ in 0..opts.max_iter {
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * par_dot(s, &d);
            d.par_iter_mut().zip(y).for_each(|(d, y)| *d -= a * y);
            alphas.push(a);
        }
        let gamma = match hist.last() {
            Some((s, y, _)) => {
                prec.apply(y, &mut hy);
                par_dot(s, y) / par_dot(y, &hy)
            }
            // ln N has curvature ~ 2K/N; start from the matching scale.
            None => 0.5 * lambda,
        };
        let q = d.clone();
        prec.apply(&q, &mut d);
        d.par_iter_mut().for_each(|d| *d *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * par_dot(y, &d);
            d.par_iter_mut().zip(s).for_each(|(d, s)| *d += (a - b) * s);
        }
        let mut slope = par_dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            prec.apply(&g, &mut d);
            d.par_iter_mut().for_each(|d| *d *= -0.5 * lambda);
            slope = par_dot(&g, &d);
        }
        // Armijo backtracking on f = ln λ.
        let f0 = lambda.ln();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            trial
                .par_iter_mut()
                .zip(u.par_iter().zip(&d))
                .for_each(|(w, (u, d))| *w = u + t * d);
            let lam = eval(&trial, &mut gn, &mut gd, &mut g_trial);
            if lam.is_finite() && lam > 0.0 && lam.ln() <= f0 + 1e-4 * t * slope {
                accepted = Some(lam);
                break;
            }
            t *= 0.5;
        }
        let Some(lam) = accepted else {
            if fresh {
                return (u, trace, SolverStatus::Stalled);
            }
            hist.clear();
            fresh = true;
            continue;
        };
        fresh = false;
        let c = normalize_scale(problem, &mut trial);
        // Move history and the old point into the new scale.
        for (s, y, _) in hist.iter_mut() {
            s.par_iter_mut().for_each(|x| *x *= c);
            y.par_iter_mut().for_each(|x| *x /= c);
        }
        let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - c * b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a / c - b / c).collect();
        let sy = par_dot(&s, &y);
        if sy > 1e-300 {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.remove(0);
            }
        }
        std::mem::swap(&mut u, &mut trial);
        g.par_iter_mut().zip(&g_trial).for_each(|(g, t)| *g = t / c);
        let prev = lambda;
        lambda = lam;
        trace.push(lambda);
        if stop.stationary(prev, lambda) {
            return (u, trace, SolverStatus::Converged);
        }
        since_rebuild += 1;
        if frozen && since_rebuild >= REBUILD_EVERY {
            prec = problem.preconditioner(Some(&u));
            since_rebuild = 0;
        }
    }
    (u, trace, SolverStatus::MaxIterations)
}

/// Scales u so D(u) = 1 without sign flips; returns the factor.
fn normalize_scale<D: Discretization + ?Sized>(problem: &D, u: &mut [f64]) -> f64 {
    let den: f64 = u
        .iter()
        .zip(problem.mass())
        .map(|(x, m)| m * x.abs().powf(problem.p()))
        .sum();
    let c = den.powf(-1.0 / problem.p());
    u.par_iter_mut().for_each(|x| *x *= c);
    c
}
