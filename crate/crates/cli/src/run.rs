//! Command pipelines. Each fills a [`ReportBundle`] with tables first and
//! then claims cells from them.

use std::time::Instant;

use serde_json::json;

use hardylab::dimension::*;
use hardylab::frostman::*;
use hardylab::geometry::{distance_transform, Ball, GridDomain};
use hardylab::hardy::*;

use crate::bundle::{csv_table, Provenance, ReportBundle};
use crate::config::{Command, ExperimentConfig, ProtocolConfig};
use crate::error::CliError;
use crate::fixtures;

pub const EXAMPLES: &[&str] = &["8.1", "perforated_disk", "punctured_square", "exterior_ball"];

fn num(x: f64) -> String {
    x.to_string()
}

fn coords(c: &[f64]) -> String {
    c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn protocol(p: &ProtocolConfig) -> ScaleProtocol {
    ScaleProtocol::geometric(p.top, p.factor, p.outer[0]..=p.outer[1], p.inner[0]..=p.inner[1], p.ratio_min)
}

fn solver(cfg: &ExperimentConfig) -> SolverOptions {
    let d = SolverOptions::default();
    SolverOptions {
        max_iter: cfg.max_iter.unwrap_or(d.max_iter),
        tol: cfg.solver_tol.unwrap_or(d.tol),
        ..d
    }
}

/// Runs the configured pipeline. Wall time and threads go into the
/// provenance block, never into a table.
pub fn run(cfg: &ExperimentConfig) -> Result<ReportBundle, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let command = cfg.command();
    let mut b = ReportBundle::new(command.name());
    match command {
        Command::Dim => dim(cfg, &mut b)?,
        Command::Aikawa => aikawa(cfg, &mut b)?,
        Command::Frostman => frostman(cfg, &mut b)?,
        Command::Hardy => hardy(cfg, &mut b)?,
        Command::Scan => scan(cfg, &mut b)?,
        Command::Example => example(cfg, &mut b)?,
    }
    b.validate().map_err(CliError::Internal)?;
    b.provenance = Some(Provenance {
        config: serde_json::to_value(cfg).expect("config serializes"),
        versions: [
            ("hardylab".to_string(), hardylab::VERSION.to_string()),
            ("hardylab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]
        .into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    });
    Ok(b)
}

fn estimates_table(b: &mut ReportBundle, ests: &[&DimensionEstimate]) -> Result<(), CliError> {
    b.table("samples", samples_csv(ests));
    b.table(
        "estimates",
        csv_table(
            &["kind", "value", "samples", "scale_ratio_min"],
            ests.iter().map(|e| {
                vec![
                    e.kind.name().to_string(),
                    num(e.value),
                    e.samples.len().to_string(),
                    num(e.scale_ratio_min),
                ]
            }),
        ),
    );
    for (row, e) in ests.iter().enumerate() {
        b.claim(e.kind.name(), "estimates", row, "value")?;
    }
    Ok(())
}

/// Cantor point-set estimates (Assouad, Minkowski) and grid codimensions;
/// other builders only have the grid side.
fn dim(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let g = fixtures::grid(cfg, None)?;
    let d = distance_transform(&g);
    let mut ests = Vec::new();
    if cfg.builder.as_deref() == Some("cantor") {
        let depth = cfg.depth.unwrap_or(8) as i32;
        let e = fixtures::points(cfg)?;
        let pts = cfg.protocol.as_ref().map(protocol).unwrap_or_else(|| {
            ScaleProtocol::geometric(1.0, 3.0, 0..=(depth - 4).max(0), 1..=(depth - 1).max(1), 27.0)
        });
        let step = e.len().div_ceil(1024).max(1);
        let centers: Vec<usize> = (0..e.len()).step_by(step).collect();
        let s = covering_counts(&e, &centers, &pts)?;
        ests.push(assouad_upper(&s, pts.scale_ratio_min)?);
        ests.push(assouad_lower(&s, pts.scale_ratio_min)?);
        let global = global_samples(&e, &pts.inner_radii, pts.scale_ratio_min)?;
        let (lo, up) = minkowski_estimates(&global, pts.scale_ratio_min)?;
        ests.push(lo);
        ests.push(up);
        let grid = cfg.protocol.as_ref().map(protocol).unwrap_or_else(|| {
            ScaleProtocol::geometric(1.0, 3.0, 0..=(depth - 4).max(0), 1..=(depth - 2).max(1), 27.0)
        });
        let (lo, up) = codimension_estimates(&g, &d, &default_centers(&g, 256), &grid)?;
        ests.push(lo);
        ests.push(up);
    } else {
        let p = cfg
            .protocol
            .as_ref()
            .map(protocol)
            .unwrap_or_else(|| default_protocol(1.0, g.spacing()));
        let centers = cfg.centers.clone().unwrap_or_else(|| default_centers(&g, 256));
        let (lo, up) = codimension_estimates(&g, &d, &centers, &p)?;
        ests.push(lo);
        ests.push(up);
    }
    let refs: Vec<&DimensionEstimate> = ests.iter().collect();
    b.artifacts.insert("estimates".into(), summary_json(&refs));
    estimates_table(b, &refs)
}

fn default_radii(cfg: &ExperimentConfig, g: &GridDomain) -> Vec<f64> {
    if cfg.builder.as_deref() == Some("cantor") {
        let depth = cfg.depth.unwrap_or(8) as i32;
        (0..=(depth - 4).max(0)).map(|k| 3f64.powi(-k)).collect()
    } else {
        (0..=10)
            .map(|k| 2f64.powi(-k))
            .filter(|&r| r >= 4.0 * g.spacing())
            .collect()
    }
}

fn aikawa(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let g = fixtures::grid(cfg, None)?;
    let d = distance_transform(&g);
    let centers = cfg.centers.clone().unwrap_or_else(|| default_centers(&g, 256));
    let radii = cfg.radii.clone().unwrap_or_else(|| default_radii(cfg, &g));
    let est = aikawa_critical_exponent(&g, &d, &centers, &radii, &AikawaOptions::default())?;
    b.table(
        "profile",
        csv_table(&["q", "A"], est.profile.iter().map(|&(q, a)| vec![num(q), num(a)])),
    );
    b.artifacts.insert("estimates".into(), summary_json(&[&est]));
    estimates_table(b, &[&est])
}

fn frostman(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let e = fixtures::points(cfg)?;
    let delta = cfg.delta.unwrap_or(1.0 / 3.0);
    let depth = cfg.tree_depth.unwrap_or(6);
    let region = cfg.child_region.unwrap_or(ChildRegion::Parent);
    let root = e.point(0).to_vec();
    let cantor = cfg.builder.as_deref() == Some("cantor");
    // The Cantor root ball is [0, 1]'s circumscribing B(0, 1); otherwise the
    // smallest ball about the first point that holds E.
    let radius = if cantor {
        1.0
    } else {
        e.iter().map(|p| dist(p, &root)).fold(0.0, f64::max).max(e.resolution())
    };
    let qs = cfg.qs.clone().unwrap_or_else(|| vec![0.5]);
    let trees: Vec<(PackingTree, MeasureDistribution)> = (1..=depth)
        .map(|k| {
            let t = build_packing_tree(&e, &root, radius, delta, k, region)?;
            let nu = distribute_measure(&t);
            Ok((t, nu))
        })
        .collect::<Result<_, CliError>>()?;
    let mut growth = Vec::new();
    for &q in &qs {
        for (t, nu) in &trees {
            let g = growth_check(t, nu, q)?;
            growth.push(vec![
                num(q),
                t.depth.to_string(),
                t.leaves().len().to_string(),
                num(g.max_constant),
                coords(&g.worst.center),
                num(g.worst.radius),
            ]);
        }
    }
    b.table(
        "growth",
        csv_table(&["q", "depth", "leaves", "max_constant", "worst_center", "worst_radius"], growth),
    );
    let (t, nu) = trees.last().expect("depth >= 1");
    let conservation = nu.conservation_error(t);
    b.table(
        "tree",
        csv_table(
            &["depth", "nodes", "conservation_error"],
            [vec![
                t.depth.to_string(),
                t.levels.iter().map(|l| l.len()).sum::<usize>().to_string(),
                num(conservation),
            ]],
        ),
    );
    b.claim("conservation_error", "tree", 0, "conservation_error")?;
    for (k, &q) in qs.iter().enumerate() {
        b.claim(&format!("max_constant_q{q}"), "growth", k * depth + depth - 1, "max_constant")?;
    }
    if cantor && (delta - 1.0 / 3.0).abs() < 1e-12 {
        let covers: Vec<Vec<Ball>> = (0..=depth as u32).map(triadic_cover).collect();
        let mut rows = Vec::new();
        for &q in &qs {
            let c = content_lower_bound(t, nu, q, &covers)?;
            for (level, v) in c.per_cover.iter().enumerate() {
                rows.push(vec![num(q), level.to_string(), num(*v), num(c.bound), (*v >= c.bound).to_string()]);
            }
        }
        b.table("content", csv_table(&["q", "cover_level", "sum", "bound", "holds"], rows));
        for (k, &q) in qs.iter().enumerate() {
            b.claim(&format!("content_bound_q{q}"), "content", k * (depth + 1), "bound")?;
        }
    }
    b.artifacts.insert("tree".into(), tree_json(t, nu));
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn result_table(b: &mut ReportBundle, r: &RayleighResult) -> Result<(), CliError> {
    let name = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
    b.table(
        "result",
        csv_table(
            &["lambda", "hardy_constant", "iterations", "residual", "status", "method"],
            [vec![
                num(r.lambda),
                num(r.hardy_constant),
                r.iterations.to_string(),
                num(r.residual),
                name(json!(r.status)),
                name(json!(r.method)),
            ]],
        ),
    );
    for k in ["lambda", "hardy_constant", "status"] {
        b.claim(k, "result", 0, k)?;
    }
    b.inconclusive |= !r.status.is_conclusive();
    Ok(())
}

fn hardy(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let p = cfg.p.expect("validated");
    let beta = cfg.beta.unwrap_or(0.0);
    let r = if cfg.builder.as_deref() == Some("interval") {
        minimize_quotient(&fixtures::line(cfg, p, beta)?, None, &solver(cfg))?
    } else {
        let g = fixtures::grid(cfg, None)?;
        let pr = HardyProblem::with_boundary(g, cfg.boundary.unwrap_or_default(), p, beta)?;
        minimize_quotient(&pr, None, &solver(cfg))?
    };
    b.table("trace", trace_csv(&r));
    b.artifacts.insert("result".into(), result_json(&r, false));
    result_table(b, &r)
}

fn study_tables(b: &mut ReportBundle, s: &RefinementStudy) -> Result<(), CliError> {
    b.table("refinement", refinement_csv(s));
    b.table(
        "witness",
        csv_table(&["j", "quotient"], s.witness.iter().map(|&(j, q)| vec![j.to_string(), num(q)])),
    );
    b.table(
        "study",
        csv_table(
            &["label", "slope", "witness_certifies"],
            [vec![s.label.name().to_string(), num(s.slope), s.witness_certifies.to_string()]],
        ),
    );
    for k in ["label", "slope", "witness_certifies"] {
        b.claim(k, "study", 0, k)?;
    }
    for row in 0..s.levels.len() {
        b.claim(&format!("lambda_{row}"), "refinement", row, "lambda")?;
    }
    b.inconclusive |= s.levels.iter().any(|l| !l.status.is_conclusive());
    Ok(())
}

fn spacings(cfg: &ExperimentConfig, default: &[i32]) -> Vec<f64> {
    cfg.hs
        .clone()
        .unwrap_or_else(|| default.iter().map(|&k| 2f64.powi(-k)).collect())
}

fn scan(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let hs = spacings(cfg, &[5, 6, 7]);
    let domains: Vec<GridDomain> = hs
        .iter()
        .map(|&h| fixtures::grid(cfg, Some(h)))
        .collect::<Result<_, _>>()?;
    let finest = domains
        .iter()
        .min_by(|a, b| a.spacing().total_cmp(&b.spacing()))
        .expect("at least 3 spacings");
    let inputs = match &cfg.thin {
        Some(t) => Some(estimate_inputs(
            finest,
            Some(&Ball::new(t.center.clone(), t.radius)),
            &default_protocol(t.radius, finest.spacing()),
            cfg.unbounded.unwrap_or(false),
            cfg.tol.unwrap_or(0.1),
        )?),
        None => None,
    };
    let opts = RefinementOptions {
        solver: solver(cfg),
        witness: cfg.witness.as_ref().map(|w| WitnessProbe {
            center: w.center.clone(),
            js: w.js.clone(),
        }),
        ..Default::default()
    };
    let map = admissibility_scan(
        &domains,
        cfg.boundary.unwrap_or_default(),
        cfg.ps.as_deref().expect("validated"),
        cfg.betas.as_deref().expect("validated"),
        cfg.margin.unwrap_or(0.25),
        inputs.as_ref(),
        &opts,
    )?;
    b.table("admissibility", admissibility_csv(&map));
    b.plots.insert("admissibility".into(), admissibility_svg(&map));
    let count = |l: PredictedLabel| map.points.iter().filter(|x| x.predicted == l).count().to_string();
    b.table(
        "scan",
        csv_table(
            &["points", "admits", "fails", "boundary", "out_of_theory", "disagreements"],
            [vec![
                map.points.len().to_string(),
                count(PredictedLabel::Admits),
                count(PredictedLabel::Fails),
                count(PredictedLabel::Boundary),
                count(PredictedLabel::OutOfTheory),
                map.disagreements().to_string(),
            ]],
        ),
    );
    for k in ["points", "admits", "fails", "boundary", "out_of_theory", "disagreements"] {
        b.claim(k, "scan", 0, k)?;
    }
    b.inconclusive |= map
        .points
        .iter()
        .any(|x| x.study.levels.iter().any(|l| !l.status.is_conclusive()));
    Ok(())
}

fn example(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<(), CliError> {
    let p = cfg.p.expect("validated");
    let beta = cfg.beta.unwrap_or(0.0);
    let name = cfg.name.as_deref().expect("validated");
    let (domains, boundary, witness): (Vec<GridDomain>, Boundary, Option<WitnessProbe>) = match name {
        "8.1" | "perforated_disk" => (
            spacings(cfg, &[6, 7, 8])
                .iter()
                .map(|&h| Ok(fixtures::perforated_disk(cfg, h).build()?))
                .collect::<Result<_, CliError>>()?,
            Boundary::Pinned,
            Some(WitnessProbe {
                center: vec![0.0; cfg.n.unwrap_or(2)],
                js: (4..=8).collect(),
            }),
        ),
        "punctured_square" => (
            spacings(cfg, &[5, 6, 7])
                .iter()
                .map(|&h| Ok(hardylab::geometry::builders::punctured_square(cfg.n.unwrap_or(2), h)?))
                .collect::<Result<_, CliError>>()?,
            Boundary::Free,
            Some(WitnessProbe {
                center: vec![0.0; cfg.n.unwrap_or(2)],
                js: (2..=8).collect(),
            }),
        ),
        "exterior_ball" => (
            spacings(cfg, &[3, 4, 5])
                .iter()
                .map(|&h| {
                    Ok(hardylab::geometry::builders::exterior_ball(
                        cfg.n.unwrap_or(2),
                        cfg.radius.unwrap_or(1.0),
                        cfg.half_width.unwrap_or(4.0),
                        h,
                    )?)
                })
                .collect::<Result<_, CliError>>()?,
            Boundary::Pinned,
            None,
        ),
        other => return Err(CliError::Config(format!("unknown example {other}"))),
    };
    let problems: Vec<HardyProblem> = domains
        .into_iter()
        .map(|d| HardyProblem::with_boundary(d, cfg.boundary.unwrap_or(boundary), p, beta))
        .collect::<Result<_, _>>()?;
    let opts = RefinementOptions {
        solver: solver(cfg),
        witness: cfg
            .witness
            .as_ref()
            .map(|w| WitnessProbe {
                center: w.center.clone(),
                js: w.js.clone(),
            })
            .or(witness),
        ..Default::default()
    };
    let s = refinement_study(&problems, &opts)?;
    b.artifacts.insert("study".into(), serde_json::to_value(&s).expect("study serializes"));
    study_tables(b, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    #[test]
    fn cantor_dimensions_near_log2_over_log3() {
        let b = run(&cfg(r#"{"command":"dim","builder":"cantor","depth":8}"#)).unwrap();
        let t = 2f64.ln() / 3f64.ln();
        for k in ["assouad_upper", "assouad_lower"] {
            let v = b.claims[k].value.as_f64().unwrap();
            assert!((v - t).abs() < 0.05, "{k} = {v}");
        }
        assert!(b.claims.contains_key("codim_lower"));
    }

    #[test]
    fn interval_hardy_constant() {
        let b = run(&cfg(r#"{"command":"hardy","builder":"interval","p":2,"β":0}"#)).unwrap();
        let c = b.claims["hardy_constant"].value.as_f64().unwrap();
        assert!((c - 3.93).abs() < 0.01, "{c}");
        assert!(!b.inconclusive);
    }

    #[test]
    fn iteration_cap_is_inconclusive_not_an_error() {
        let b = run(&cfg(
            r#"{"command":"hardy","builder":"punctured_square","h":0.125,"p":1.5,"max_iter":2}"#,
        ))
        .unwrap();
        assert!(b.inconclusive);
        assert_eq!(b.claims["status"].value, json!("max-iterations"));
    }

    #[test]
    fn frostman_claims_trace_to_rows() {
        let b = run(&cfg(r#"{"command":"frostman","builder":"cantor","tree_depth":4,"qs":[0.5,0.2]}"#)).unwrap();
        assert_eq!(b.claims["max_constant_q0.5"].value, json!(1.0));
        assert!(b.claims["max_constant_q0.2"].value.as_f64().unwrap() > 1.0);
        assert!(b.claims["conservation_error"].value.as_f64().unwrap() <= 1e-12);
        b.validate().unwrap();
    }

    #[test]
    fn aikawa_point_on_line() {
        let b = run(&cfg(r#"{"command":"aikawa","builder":"point_on_line"}"#)).unwrap();
        let v = b.claims["aikawa"].value.as_f64().unwrap();
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }
}
