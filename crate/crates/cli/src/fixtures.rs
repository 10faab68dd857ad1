//! Named builders reachable from a config.

use serde::Serialize;

use hardylab::geometry::builders::{
    cantor_complement, cantor_points, exterior_ball, punctured_ball, punctured_square, PerforatedDisk,
};
use hardylab::geometry::{GridDomain, PointSet};
use hardylab::hardy::LineProblem;

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Param {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fixture {
    pub name: &'static str,
    pub doc: &'static str,
    pub params: Vec<Param>,
    pub commands: Vec<Command>,
}

const fn param(name: &'static str, default: &'static str, doc: &'static str) -> Param {
    Param { name, default, doc }
}

const GRID_COMMANDS: [Command; 4] = [Command::Dim, Command::Aikawa, Command::Hardy, Command::Scan];

pub fn list_fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "cantor",
            doc: "Middle-thirds Cantor prefractal: left endpoints as a point set, or its complement on a 3^-depth grid",
            params: vec![
                param("depth", "8", "prefractal depth"),
                param("pad", "1", "grid margin around [0, 1]"),
            ],
            commands: vec![Command::Dim, Command::Aikawa, Command::Frostman],
        },
        Fixture {
            name: "point_on_line",
            doc: "The origin as the complement in [-1, 1]",
            params: vec![param("h", "2^-12", "grid spacing")],
            commands: vec![Command::Dim, Command::Aikawa],
        },
        Fixture {
            name: "interval",
            doc: "Half line (eps, length) with d(t) = t on a log-spaced grid; radial_dim n gives the weight t^(n-1)",
            params: vec![
                param("eps", "1e-20", "inner truncation"),
                param("length", "1", "outer truncation"),
                param("count", "4096", "number of nodes"),
                param("radial_dim", "1", "dimension of the radial reduction"),
            ],
            commands: vec![Command::Hardy],
        },
        Fixture {
            name: "punctured_square",
            doc: "(-1, 1)^n minus the origin",
            params: vec![param("n", "2", "dimension"), param("h", "2^-6", "grid spacing")],
            commands: GRID_COMMANDS.to_vec(),
        },
        Fixture {
            name: "perforated_disk",
            doc: "B(0, radius) minus the origin and the balls B(w_j, 2^-2j), w_j = (2^-j, 0), j_min <= j <= j_max",
            params: vec![
                param("n", "2", "dimension"),
                param("radius", "2", "outer radius"),
                param("j_min", "2", "first hole"),
                param("j_max", "4", "last hole"),
                param("h", "2^-6", "grid spacing"),
            ],
            commands: GRID_COMMANDS.to_vec(),
        },
        Fixture {
            name: "punctured_ball",
            doc: "B(0, radius) minus the origin",
            params: vec![
                param("n", "2", "dimension"),
                param("radius", "1", "outer radius"),
                param("h", "2^-6", "grid spacing"),
            ],
            commands: GRID_COMMANDS.to_vec(),
        },
        Fixture {
            name: "exterior_ball",
            doc: "R^n minus B(0, radius), truncated to [-half_width, half_width]^n",
            params: vec![
                param("n", "2", "dimension"),
                param("radius", "1", "radius of the removed ball"),
                param("half_width", "4", "half width of the box"),
                param("h", "2^-4", "grid spacing"),
            ],
            commands: GRID_COMMANDS.to_vec(),
        },
    ]
}

pub fn find(name: &str) -> Option<Fixture> {
    list_fixtures().into_iter().find(|f| f.name == name)
}

fn origin_on_line(h: f64) -> Result<GridDomain, CliError> {
    let m = (1.0 / h).round() as usize;
    if m == 0 || ((m as f64) * h - 1.0).abs() > 1e-9 {
        return Err(CliError::Config(format!("point_on_line needs 1/h to be an integer, got h = {h}")));
    }
    let mut mask = vec![false; 2 * m + 1];
    mask[m] = true;
    Ok(GridDomain::new(vec![-1.0], h, vec![2 * m + 1], mask)?)
}

/// The builder's grid at spacing `h` (ignored by `cantor`, whose spacing is
/// 3^-depth).
pub fn grid(cfg: &ExperimentConfig, h: Option<f64>) -> Result<GridDomain, CliError> {
    let name = cfg.builder.as_deref().unwrap_or_default();
    let n = cfg.n.unwrap_or(2);
    let h_or = |default: f64| h.or(cfg.h).unwrap_or(default);
    Ok(match name {
        "cantor" => cantor_complement(cfg.depth.unwrap_or(8), cfg.pad.unwrap_or(1.0))?,
        "point_on_line" => origin_on_line(h_or(2f64.powi(-12)))?,
        "punctured_square" => punctured_square(n, h_or(2f64.powi(-6)))?,
        "perforated_disk" => perforated_disk(cfg, h_or(2f64.powi(-6))).build()?,
        "punctured_ball" => punctured_ball(n, cfg.radius.unwrap_or(1.0), h_or(2f64.powi(-6)))?,
        "exterior_ball" => exterior_ball(
            n,
            cfg.radius.unwrap_or(1.0),
            cfg.half_width.unwrap_or(4.0),
            h_or(2f64.powi(-4)),
        )?,
        other => return Err(CliError::Config(format!("builder {other} has no grid"))),
    })
}

pub fn perforated_disk(cfg: &ExperimentConfig, h: f64) -> PerforatedDisk {
    let d = PerforatedDisk::default();
    PerforatedDisk {
        dim: cfg.n.unwrap_or(d.dim),
        radius: cfg.radius.unwrap_or(d.radius),
        j_min: cfg.j_min.unwrap_or(d.j_min),
        j_max: cfg.j_max.unwrap_or(d.j_max),
        h,
    }
}

pub fn points(cfg: &ExperimentConfig) -> Result<PointSet, CliError> {
    match cfg.builder.as_deref() {
        Some("cantor") => Ok(cantor_points(cfg.depth.unwrap_or(8))?),
        other => Err(CliError::Config(format!("builder {other:?} has no point set"))),
    }
}

pub fn line(cfg: &ExperimentConfig, p: f64, beta: f64) -> Result<LineProblem, CliError> {
    Ok(LineProblem::half_line(
        cfg.eps.unwrap_or(1e-20),
        cfg.length.unwrap_or(1.0),
        cfg.count.unwrap_or(4096),
        p,
        beta,
        cfg.radial_dim.unwrap_or(1),
    )?)
}
