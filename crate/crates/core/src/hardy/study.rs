use serde::{Deserialize, Serialize};

use super::problem::{Boundary, Discretization, HardyProblem, LineProblem};
use super::solve::{minimize_quotient, SolverOptions, SolverStatus};
use super::witness::certifies_decay;
use crate::dimension::{codimension_estimates, default_centers, global_samples, minkowski_estimates, ScaleProtocol};
use crate::error::{invalid, LabError, Result};
use crate::geometry::{distance_transform, Ball, GridDomain, PointSet};
use crate::numeric::ls_slope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericLabel {
    HoldsEvidence,
    FailsEvidence,
    Inconclusive,
}

impl NumericLabel {
    pub fn name(self) -> &'static str {
        match self {
            NumericLabel::HoldsEvidence => "holds-evidence",
            NumericLabel::FailsEvidence => "fails-evidence",
            NumericLabel::Inconclusive => "inconclusive",
        }
    }
}

/// Shell witnesses centered at a complement point, evaluated on the finest
/// grid of a study. Levels whose inner radius is below the spacing are
/// skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessProbe {
    pub center: Vec<f64>,
    pub js: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementOptions {
    pub solver: SolverOptions,
    pub witness: Option<WitnessProbe>,
    /// |slope| bound for holds-evidence.
    pub hold_slope: f64,
    /// Minimum fine/coarse λ ratio for holds-evidence.
    pub hold_ratio: f64,
    /// Slope from which λ counts as decaying.
    pub fail_slope: f64,
    /// Start each finer solve from the interpolated coarser minimizer.
    pub prolongate: bool,
}

impl Default for RefinementOptions {
    fn default() -> Self {
        RefinementOptions {
            solver: SolverOptions::default(),
            witness: None,
            hold_slope: 0.15,
            hold_ratio: 0.8,
            fail_slope: 0.3,
            prolongate: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementLevel {
    pub scale: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub status: SolverStatus,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementStudy {
    /// Coarsest first.
    pub levels: Vec<RefinementLevel>,
    /// Least-squares slope of ln λ against ln h.
    pub slope: f64,
    /// λ_{k+1} / λ_k for consecutive levels.
    pub ratios: Vec<f64>,
    pub witness: Vec<(u32, f64)>,
    pub witness_certifies: bool,
    pub label: NumericLabel,
}

/// Discretizations that can be compared and refined.
pub trait Refinable: Discretization + Sized {
    /// Errors unless both discretize the same continuous problem.
    fn compatible(&self, other: &Self) -> Result<()>;
    /// Interpolates a coarse free-node vector onto this discretization.
    fn prolongate(&self, coarse: &Self, u: &[f64]) -> Vec<f64>;
    fn shell_series(&self, probe: &WitnessProbe) -> Result<Vec<(u32, f64)>>;
}

impl Refinable for HardyProblem {
    fn compatible(&self, other: &Self) -> Result<()> {
        let (a, b) = (self.domain(), other.domain());
        let h = a.spacing().max(b.spacing());
        let same_box = a.dim() == b.dim()
            && a.origin().iter().zip(b.origin()).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + h))
            && a.upper().iter().zip(b.upper()).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + h));
        if !same_box {
            return Err(LabError::MixedDomains("grid boxes differ".into()));
        }
        // On nested grids the masks must agree at shared nodes, up to the few
        // nodes a sub-resolution feature forces into the complement.
        let (coarse, fine) = if a.spacing() >= b.spacing() { (a, b) } else { (b, a) };
        let ratio = coarse.spacing() / fine.spacing();
        if (ratio - ratio.round()).abs() < 1e-9 {
            let mut differ = 0usize;
            for i in 0..coarse.len() {
                if let Some(j) = fine.nearest_node(&coarse.coords(i)) {
                    differ += (coarse.mask()[i] != fine.mask()[j]) as usize;
                }
            }
            if differ * 20 > coarse.len() {
                return Err(LabError::MixedDomains(format!(
                    "complement masks differ at {differ} of {} shared nodes",
                    coarse.len()
                )));
            }
        }
        if self.boundary() != other.boundary() {
            return Err(LabError::MixedDomains("box boundary treatments differ".into()));
        }
        if self.p() != other.p() || self.beta() != other.beta() {
            return Err(LabError::MixedDomains("exponents differ".into()));
        }
        Ok(())
    }

    fn prolongate(&self, coarse: &Self, u: &[f64]) -> Vec<f64> {
        let cd = coarse.domain();
        let n = cd.dim();
        let shape = cd.shape();
        let strides = cd.strides();
        let hc = cd.spacing();
        let mut full = vec![0.0; cd.len()];
        for (k, &i) in coarse.free_nodes().iter().enumerate() {
            full[i] = u[k];
        }
        let fd = self.domain();
        self.free_nodes()
            .iter()
            .map(|&i| {
                let x = fd.coords(i);
                let mut base = 0;
                let mut frac = vec![0.0; n];
                for a in 0..n {
                    let t = ((x[a] - cd.origin()[a]) / hc).clamp(0.0, (shape[a] - 1) as f64);
                    let lo = (t.floor() as usize).min(shape[a].saturating_sub(2));
                    frac[a] = t - lo as f64;
                    base += lo * strides[a];
                }
                (0..1usize << n)
                    .map(|m| {
                        let mut w = 1.0;
                        let mut off = 0;
                        for a in 0..n {
                            if m >> a & 1 == 1 {
                                w *= frac[a];
                                off += strides[a];
                            } else {
                                w *= 1.0 - frac[a];
                            }
                        }
                        if w == 0.0 {
                            0.0
                        } else {
                            w * full[base + off]
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn shell_series(&self, probe: &WitnessProbe) -> Result<Vec<(u32, f64)>> {
        let h = self.domain().spacing();
        let js: Vec<u32> = probe
            .js
            .iter()
            .copied()
            .filter(|&j| 2f64.powi(-(j as i32) - 1) >= h)
            .collect();
        self.shell_values(&probe.center, &js)
    }
}

impl Refinable for LineProblem {
    fn compatible(&self, other: &Self) -> Result<()> {
        let (a, b) = (self.nodes(), other.nodes());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
        if !close(a[0], b[0]) || !close(*a.last().unwrap(), *b.last().unwrap()) {
            return Err(LabError::MixedDomains("line endpoints differ".into()));
        }
        if self.radial_dim() != other.radial_dim() || self.p() != other.p() || self.beta() != other.beta() {
            return Err(LabError::MixedDomains("line problems differ".into()));
        }
        Ok(())
    }

    fn prolongate(&self, coarse: &Self, u: &[f64]) -> Vec<f64> {
        let t = coarse.nodes();
        let mut full = Vec::with_capacity(u.len() + 2);
        full.push(0.0);
        full.extend_from_slice(u);
        full.push(0.0);
        let fine = self.nodes();
        fine[1..fine.len() - 1]
            .iter()
            .map(|&x| {
                let k = t.partition_point(|&s| s <= x).clamp(1, t.len() - 1);
                let w = (x - t[k - 1]) / (t[k] - t[k - 1]);
                (1.0 - w) * full[k - 1] + w * full[k]
            })
            .collect()
    }

    fn shell_series(&self, _probe: &WitnessProbe) -> Result<Vec<(u32, f64)>> {
        invalid("witness families are defined on grid domains")
    }
}

/// Minimizes on each discretization, coarsest first, and classifies the trend.
pub fn refinement_study<D: Refinable>(problems: &[D], opts: &RefinementOptions) -> Result<RefinementStudy> {
    if problems.len() < 3 {
        return invalid("a refinement study needs at least 3 resolutions");
    }
    for w in problems.windows(2) {
        w[0].compatible(&w[1])?;
    }
    let mut order: Vec<usize> = (0..problems.len()).collect();
    order.sort_by(|&a, &b| problems[b].scale().total_cmp(&problems[a].scale()));
    let mut levels = Vec::with_capacity(problems.len());
    let mut prev: Option<(usize, Vec<f64>)> = None;
    for &k in &order {
        let pr = &problems[k];
        let init = match (&prev, opts.prolongate) {
            (Some((c, u)), true) => {
                let v = pr.prolongate(&problems[*c], u);
                v.iter().any(|&x| x != 0.0).then_some(v)
            }
            _ => None,
        };
        let res = minimize_quotient(pr, init.as_deref(), &opts.solver)?;
        levels.push(RefinementLevel {
            scale: pr.scale(),
            lambda: res.lambda,
            iterations: res.iterations,
            residual: res.residual,
            status: res.status,
            trace: res.trace,
        });
        prev = Some((k, res.minimizer));
    }
    let lx: Vec<f64> = levels.iter().map(|l| l.scale.ln()).collect();
    let ly: Vec<f64> = levels.iter().map(|l| l.lambda.ln()).collect();
    let slope = ls_slope(&lx, &ly);
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[1].lambda / w[0].lambda).collect();
    let witness = match &opts.witness {
        Some(probe) => problems[*order.last().unwrap()].shell_series(probe)?,
        None => Vec::new(),
    };
    let values: Vec<f64> = witness.iter().map(|w| w.1).collect();
    let witness_certifies = certifies_decay(&values);
    let converged = levels.iter().all(|l| l.status.is_conclusive());
    let label = if witness_certifies || (converged && slope >= opts.fail_slope) {
        NumericLabel::FailsEvidence
    } else if converged && slope.abs() <= opts.hold_slope && ratios.iter().all(|&r| r >= opts.hold_ratio) {
        NumericLabel::HoldsEvidence
    } else {
        NumericLabel::Inconclusive
    };
    Ok(RefinementStudy {
        levels,
        slope,
        ratios,
        witness,
        witness_certifies,
        label,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictedLabel {
    Admits,
    Fails,
    Boundary,
    /// β ≥ p - 1, where the sufficient conditions say nothing.
    OutOfTheory,
}

impl PredictedLabel {
    pub fn name(self) -> &'static str {
        match self {
            PredictedLabel::Admits => "admits",
            PredictedLabel::Fails => "fails",
            PredictedLabel::Boundary => "boundary",
            PredictedLabel::OutOfTheory => "out-of-theory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodimPair {
    pub lower: f64,
    pub upper: f64,
}

/// Estimates for the complement inside one ball centered on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub lcodim: f64,
    /// Hausdorff codimension, estimated from below-Minkowski counts.
    pub codim_h: f64,
}

/// Dimension inputs to the prediction rules. `thick_upper` and `thin_lower`
/// describe a split Ω = Ω₀ \ F: upper codimension of Ω₀^c and lower
/// codimension of F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInputs {
    pub complement: Option<CodimPair>,
    /// The upper-codimension rule only applies to unbounded complements.
    pub complement_unbounded: bool,
    pub thick_upper: Option<f64>,
    pub thin_lower: Option<f64>,
    pub local: Vec<LocalEstimate>,
    /// Accuracy attached to every estimate.
    pub tol: f64,
}

/// Label from the rule set alone, with every estimate widened by its
/// tolerance against the conclusion:
/// * admits when lcodim(Ω^c) > p-β+m, or ucodim(Ω^c) < p-β-m with Ω^c
///   unbounded, or ucodim(Ω₀^c) < p-β-m and lcodim(F) > p-β+m; each with
///   p-β > 1+m;
/// * fails when some local estimate traps p-β between lcodim and codim_H
///   (widened by the estimate tolerance), with p-β > 1+m;
/// * boundary otherwise.
pub fn predict_admissibility(inputs: &PredictionInputs, p: f64, beta: f64, margin: f64) -> Result<PredictedLabel> {
    if !(margin > 0.0) {
        return invalid("margin must be positive");
    }
    if !(inputs.tol >= 0.0) {
        return invalid("estimate tolerance must be nonnegative");
    }
    let split = inputs.thick_upper.zip(inputs.thin_lower);
    if inputs.complement.is_none() && split.is_none() && inputs.local.is_empty() {
        return Err(LabError::MissingEstimate("codimension estimates"));
    }
    if beta >= p - 1.0 {
        return Ok(PredictedLabel::OutOfTheory);
    }
    let g = p - beta;
    let m = margin;
    let gate = g > 1.0 + m;
    let tol = inputs.tol;
    let admits = gate
        && (inputs.complement.is_some_and(|c| {
            c.lower - tol > g + m || (inputs.complement_unbounded && c.upper + tol < g - m)
        }) || split.is_some_and(|(thick, thin)| thick + tol < g - m && thin - tol > g + m));
    let fails = gate
        && inputs
            .local
            .iter()
            .any(|l| l.lcodim - tol <= g && g <= l.codim_h + tol);
    Ok(match (admits, fails) {
        (true, false) => PredictedLabel::Admits,
        (false, true) => PredictedLabel::Fails,
        _ => PredictedLabel::Boundary,
    })
}

/// Default estimation protocol: outer radii top·2^{-k}, inner radii down to
/// 2h, ratio at least 8.
pub fn default_protocol(top: f64, h: f64) -> ScaleProtocol {
    let mut levels = 0;
    while top * 2f64.powi(-(levels + 1)) >= 2.0 * h * (1.0 - 1e-12) {
        levels += 1;
    }
    ScaleProtocol::geometric(top, 2.0, 0..=(levels - 3).max(0), 3..=levels.max(3), 8.0)
}

/// Computes prediction inputs from a grid domain. `thin` selects F as the
/// complement nodes inside the ball; the remainder is Ω₀^c.
pub fn estimate_inputs(
    domain: &GridDomain,
    thin: Option<&Ball>,
    protocol: &ScaleProtocol,
    complement_unbounded: bool,
    tol: f64,
) -> Result<PredictionInputs> {
    let mask = domain.mask();
    if !mask.contains(&true) {
        return Err(LabError::MissingEstimate("empty complement"));
    }
    let in_thin: Vec<bool> = (0..domain.len())
        .map(|i| mask[i] && thin.is_some_and(|b| b.contains(&domain.coords(i))))
        .collect();
    let thin_nodes: Vec<usize> = (0..domain.len()).filter(|&i| in_thin[i]).collect();
    let codims = |d: &GridDomain, centers: &[Vec<f64>]| -> Result<Option<CodimPair>> {
        if centers.is_empty() {
            return Ok(None);
        }
        let dist = distance_transform(d);
        match codimension_estimates(d, &dist, centers, protocol) {
            Ok((lo, up)) => Ok(Some(CodimPair {
                lower: lo.value,
                upper: up.value,
            })),
            Err(LabError::Invalid(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let stride = |nodes: &[usize], cap: usize| -> Vec<Vec<f64>> {
        let step = nodes.len().div_ceil(cap).max(1);
        nodes.iter().step_by(step).map(|&i| domain.coords(i)).collect()
    };
    let mut centers = default_centers(domain, 256);
    centers.extend(stride(&thin_nodes, 64));
    let complement = codims(domain, &centers)?;
    let (mut thick_upper, mut thin_lower, mut local) = (None, None, Vec::new());
    if let Some(ball) = thin.filter(|_| !thin_nodes.is_empty()) {
        let thick_mask: Vec<bool> = (0..domain.len()).map(|i| mask[i] && !in_thin[i]).collect();
        let thick_nodes: Vec<usize> = (0..domain.len()).filter(|&i| thick_mask[i]).collect();
        let origin = domain.origin().to_vec();
        let (h, shape) = (domain.spacing(), domain.shape().to_vec());
        if !thick_nodes.is_empty() {
            let d = GridDomain::new(origin.clone(), h, shape.clone(), thick_mask)?;
            thick_upper = codims(&d, &stride(&thick_nodes, 256))?.map(|c| c.upper);
        }
        let d = GridDomain::new(origin, h, shape, in_thin.clone())?;
        let f_codim = codims(&d, &stride(&thin_nodes, 64))?;
        thin_lower = f_codim.map(|c| c.lower);
        let pts = PointSet::new(domain.dim(), thin_nodes.iter().map(|&i| domain.coords(i)).collect(), h)?;
        let inner: Vec<f64> = protocol.inner_radii.clone();
        let g = global_samples(&pts, &inner, protocol.scale_ratio_min)?;
        let (mlow, _) = minkowski_estimates(&g, protocol.scale_ratio_min)?;
        if let Some(c) = f_codim {
            local.push(LocalEstimate {
                center: ball.center.clone(),
                radius: ball.radius,
                lcodim: c.lower,
                codim_h: domain.dim() as f64 - mlow.value,
            });
        }
    }
    Ok(PredictionInputs {
        complement,
        complement_unbounded,
        thick_upper,
        thin_lower,
        local,
        tol,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    pub p: f64,
    pub beta: f64,
    pub predicted: PredictedLabel,
    pub numeric: NumericLabel,
    pub study: RefinementStudy,
    /// Predicted admits against fails-evidence, or fails against
    /// holds-evidence.
    pub disagreement: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityMap {
    pub ps: Vec<f64>,
    pub betas: Vec<f64>,
    pub margin: f64,
    pub inputs: Option<PredictionInputs>,
    /// Row-major: β fastest.
    pub points: Vec<ScanPoint>,
}

impl AdmissibilityMap {
    pub fn disagreements(&self) -> usize {
        self.points.iter().filter(|p| p.disagreement).count()
    }

    pub fn get(&self, p: f64, beta: f64) -> Option<&ScanPoint> {
        self.points.iter().find(|x| x.p == p && x.beta == beta)
    }
}

/// Runs predictions and a refinement study at every (p, β). `domains` are the
/// same continuous domain at several resolutions. Without inputs every
/// in-theory point is predicted boundary.
pub fn admissibility_scan(
    domains: &[GridDomain],
    boundary: Boundary,
    ps: &[f64],
    betas: &[f64],
    margin: f64,
    inputs: Option<&PredictionInputs>,
    opts: &RefinementOptions,
) -> Result<AdmissibilityMap> {
    if ps.is_empty() || betas.is_empty() || ps.iter().chain(betas).any(|x| !x.is_finite()) {
        return invalid("scan grids must be finite and nonempty");
    }
    let base: Vec<HardyProblem> = domains
        .iter()
        .map(|d| HardyProblem::with_boundary(d.clone(), boundary, 2.0, 0.0))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(ps.len() * betas.len());
    for &p in ps {
        for &beta in betas {
            let predicted = match inputs {
                Some(inp) => match predict_admissibility(inp, p, beta, margin) {
                    Err(LabError::MissingEstimate(_)) => PredictedLabel::Boundary,
                    other => other?,
                },
                None if beta >= p - 1.0 => PredictedLabel::OutOfTheory,
                None => PredictedLabel::Boundary,
            };
            let problems: Vec<HardyProblem> = base
                .iter()
                .map(|b| b.with_exponents(p, beta))
                .collect::<Result<_>>()?;
            let study = refinement_study(&problems, opts)?;
            let numeric = study.label;
            let disagreement = matches!(
                (predicted, numeric),
                (PredictedLabel::Admits, NumericLabel::FailsEvidence) | (PredictedLabel::Fails, NumericLabel::HoldsEvidence)
            );
            points.push(ScanPoint {
                p,
                beta,
                predicted,
                numeric,
                study,
                disagreement,
            });
        }
    }
    Ok(AdmissibilityMap {
        ps: ps.to_vec(),
        betas: betas.to_vec(),
        margin,
        inputs: inputs.cloned(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::{punctured_ball, punctured_square, PerforatedDisk};

    fn point_inputs(tol: f64) -> PredictionInputs {
        // B(0,1) \ {0} in the plane: the exterior of the disk is thick
        // (codimension 0), the puncture has codimension 2.
        PredictionInputs {
            complement: Some(CodimPair { lower: 0.0, upper: 2.0 }),
            complement_unbounded: false,
            thick_upper: Some(0.0),
            thin_lower: Some(2.0),
            local: vec![LocalEstimate {
                center: vec![0.0, 0.0],
                radius: 0.5,
                lcodim: 2.0,
                codim_h: 2.0,
            }],
            tol,
        }
    }

    #[test]
    fn punctured_disk_predictions() {
        let inp = point_inputs(0.05);
        assert_eq!(predict_admissibility(&inp, 1.5, 0.0, 0.25).unwrap(), PredictedLabel::Admits);
        assert_eq!(predict_admissibility(&inp, 2.0, 0.0, 0.25).unwrap(), PredictedLabel::Fails);
        assert_eq!(predict_admissibility(&inp, 2.0, 0.5, 0.25).unwrap(), PredictedLabel::Admits);
        assert_eq!(predict_admissibility(&inp, 1.5, 0.5, 0.25).unwrap(), PredictedLabel::OutOfTheory);
        // Within the margin of either threshold.
        assert_eq!(predict_admissibility(&inp, 1.2, 0.0, 0.25).unwrap(), PredictedLabel::Boundary);
        assert_eq!(predict_admissibility(&inp, 1.8, 0.0, 0.25).unwrap(), PredictedLabel::Boundary);
        for p in [1.3, 1.5, 1.7] {
            assert_eq!(predict_admissibility(&inp, p, 0.0, 0.1).unwrap(), PredictedLabel::Admits, "p={p}");
        }
        // Above the point's codimension neither rule applies.
        assert_eq!(predict_admissibility(&inp, 2.3, 0.0, 0.1).unwrap(), PredictedLabel::Boundary);
    }

    #[test]
    fn huge_margin_leaves_only_boundary() {
        let inp = point_inputs(0.05);
        for p in [1.1, 1.5, 2.0, 3.0, 5.0] {
            for beta in [-1.0, -0.5, 0.0] {
                assert_eq!(predict_admissibility(&inp, p, beta, 100.0).unwrap(), PredictedLabel::Boundary);
            }
        }
    }

    #[test]
    fn unbounded_thick_complements_admit_below_their_codimension() {
        let inp = PredictionInputs {
            complement: Some(CodimPair { lower: 0.0, upper: 0.0 }),
            complement_unbounded: true,
            thick_upper: None,
            thin_lower: None,
            local: vec![],
            tol: 0.0,
        };
        assert_eq!(predict_admissibility(&inp, 2.0, 0.0, 0.25).unwrap(), PredictedLabel::Admits);
        let bounded = PredictionInputs {
            complement_unbounded: false,
            ..inp
        };
        assert_eq!(predict_admissibility(&bounded, 2.0, 0.0, 0.25).unwrap(), PredictedLabel::Boundary);
    }

    #[test]
    fn missing_estimates_and_bad_margins_are_errors() {
        let empty = PredictionInputs {
            complement: None,
            complement_unbounded: false,
            thick_upper: None,
            thin_lower: Some(2.0),
            local: vec![],
            tol: 0.0,
        };
        assert!(matches!(
            predict_admissibility(&empty, 1.5, 0.0, 0.25),
            Err(LabError::MissingEstimate(_))
        ));
        assert!(predict_admissibility(&point_inputs(0.0), 1.5, 0.0, 0.0).is_err());
        assert!(predict_admissibility(&point_inputs(-1.0), 1.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn estimated_inputs_for_the_punctured_disk() {
        let d = punctured_ball(2, 1.0, 1.0 / 64.0).unwrap();
        let ball = Ball {
            center: vec![0.0, 0.0],
            radius: 0.5,
        };
        let inp = estimate_inputs(&d, Some(&ball), &default_protocol(0.5, d.spacing()), false, 0.1).unwrap();
        let thin = inp.thin_lower.unwrap();
        assert!((thin - 2.0).abs() < 0.1, "{thin}");
        assert!(inp.thick_upper.unwrap() < 0.5);
        assert!(inp.complement.unwrap().lower < 0.5);
        assert_eq!(inp.local.len(), 1);
        assert!((inp.local[0].codim_h - 2.0).abs() < 0.1);
        assert_eq!(predict_admissibility(&inp, 1.5, 0.0, 0.25).unwrap(), PredictedLabel::Admits);
        assert_eq!(predict_admissibility(&inp, 2.0, 0.0, 0.25).unwrap(), PredictedLabel::Fails);
        let interior = Ball {
            center: vec![0.5, 0.0],
            radius: 0.1,
        };
        let no_thin = estimate_inputs(&d, Some(&interior), &default_protocol(0.5, d.spacing()), false, 0.1).unwrap();
        assert!(no_thin.thin_lower.is_none() && no_thin.local.is_empty());
    }

    #[test]
    fn half_line_refinement_holds() {
        let problems: Vec<LineProblem> = [1024, 2048, 4096]
            .iter()
            .map(|&m| LineProblem::half_line(1e-20, 1.0, m, 2.0, 0.0, 1).unwrap())
            .collect();
        let st = refinement_study(&problems, &RefinementOptions::default()).unwrap();
        assert!(st.slope.abs() < 0.01, "{}", st.slope);
        assert_eq!(st.label, NumericLabel::HoldsEvidence);
        // Coarsest first regardless of input order.
        let rev: Vec<LineProblem> = problems.into_iter().rev().collect();
        let st2 = refinement_study(&rev, &RefinementOptions::default()).unwrap();
        assert!(st2.levels[0].scale > st2.levels[2].scale);
    }

    #[test]
    fn punctured_square_refinement_fails() {
        let problems: Vec<HardyProblem> = (4..=6)
            .map(|k| HardyProblem::new(punctured_square(2, 2f64.powi(-k)).unwrap(), 2.0, 0.0).unwrap())
            .collect();
        let opts = RefinementOptions {
            witness: Some(WitnessProbe {
                center: vec![0.0, 0.0],
                js: (1..=8).collect(),
            }),
            ..Default::default()
        };
        let st = refinement_study(&problems, &opts).unwrap();
        assert_eq!(st.label, NumericLabel::FailsEvidence);
        // Shells finer than the spacing are dropped.
        assert_eq!(st.witness.last().unwrap().0, 5);
        assert!(st.ratios.iter().all(|&r| r < 0.9));
    }

    #[test]
    fn mixed_inputs_are_rejected() {
        let h = 1.0 / 16.0;
        let square = HardyProblem::new(punctured_square(2, h).unwrap(), 2.0, 0.0).unwrap();
        let disk = PerforatedDisk {
            radius: 1.0,
            h: h / 2.0,
            ..Default::default()
        }
        .build()
        .unwrap();
        let disk = HardyProblem::new(disk, 2.0, 0.0).unwrap();
        let finer = HardyProblem::new(punctured_square(2, h / 4.0).unwrap(), 2.0, 0.0).unwrap();
        let opts = RefinementOptions::default();
        assert!(matches!(
            refinement_study(&[square.clone(), disk, finer.clone()], &opts),
            Err(LabError::MixedDomains(_))
        ));
        let other_p = square.with_exponents(1.5, 0.0).unwrap();
        assert!(matches!(
            refinement_study(&[square.clone(), other_p, finer.clone()], &opts),
            Err(LabError::MixedDomains(_))
        ));
        let wide = HardyProblem::new(punctured_ball(2, 2.0, h).unwrap(), 2.0, 0.0).unwrap();
        assert!(matches!(square.compatible(&wide), Err(LabError::MixedDomains(_))));
        assert!(matches!(refinement_study(&[square, finer], &opts), Err(LabError::Invalid(_))));
        let a = LineProblem::half_line(1e-6, 1.0, 50, 2.0, 0.0, 1).unwrap();
        let b = LineProblem::half_line(1e-8, 1.0, 100, 2.0, 0.0, 1).unwrap();
        assert!(matches!(a.compatible(&b), Err(LabError::MixedDomains(_))));
    }

    #[test]
    fn scan_without_estimates_predicts_boundary() {
        let domains: Vec<GridDomain> = (3..=5).map(|k| punctured_square(2, 2f64.powi(-k)).unwrap()).collect();
        let map = admissibility_scan(
            &domains,
            Boundary::Pinned,
            &[1.5, 2.0],
            &[-0.5, 0.75],
            0.25,
            None,
            &RefinementOptions::default(),
        )
        .unwrap();
        assert_eq!(map.points.len(), 4);
        assert_eq!(map.get(1.5, -0.5).unwrap().predicted, PredictedLabel::Boundary);
        assert_eq!(map.get(1.5, 0.75).unwrap().predicted, PredictedLabel::OutOfTheory);
        assert_eq!(map.get(2.0, 0.75).unwrap().predicted, PredictedLabel::Boundary);
        assert_eq!(map.disagreements(), 0);
        // Rows follow p, then β.
        assert_eq!((map.points[1].p, map.points[1].beta), (1.5, 0.75));
        let unusable = PredictionInputs {
            complement: None,
            complement_unbounded: false,
            thick_upper: None,
            thin_lower: None,
            local: vec![],
            tol: 0.0,
        };
        let map = admissibility_scan(
            &domains,
            Boundary::Pinned,
            &[2.0],
            &[0.0],
            0.25,
            Some(&unusable),
            &RefinementOptions::default(),
        )
        .unwrap();
        assert_eq!(map.points[0].predicted, PredictedLabel::Boundary);
        assert!(admissibility_scan(&domains, Boundary::Pinned, &[], &[0.0], 0.25, None, &RefinementOptions::default()).is_err());
    }

    #[test]
    fn scan_flags_contradictions() {
        let domains: Vec<GridDomain> = (4..=6).map(|k| punctured_square(2, 2f64.powi(-k)).unwrap()).collect();
        // Deliberately wrong inputs: claim the puncture is very thin so
        // p = 2 is predicted to admit, against the decaying minimum.
        let wrong = PredictionInputs {
            complement: Some(CodimPair { lower: 3.0, upper: 3.0 }),
            complement_unbounded: false,
            thick_upper: None,
            thin_lower: None,
            local: vec![],
            tol: 0.0,
        };
        let map = admissibility_scan(
            &domains,
            Boundary::Pinned,
            &[2.0],
            &[0.0],
            0.25,
            Some(&wrong),
            &RefinementOptions::default(),
        )
        .unwrap();
        let pt = &map.points[0];
        assert_eq!(pt.predicted, PredictedLabel::Admits);
        assert_eq!(pt.numeric, NumericLabel::FailsEvidence);
        assert!(pt.disagreement);
        assert_eq!(map.disagreements(), 1);
    }
}
