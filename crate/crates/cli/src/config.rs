use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::fixtures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Dim,
    Aikawa,
    Frostman,
    Hardy,
    Scan,
    Example,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dim => "dim",
            Command::Aikawa => "aikawa",
            Command::Frostman => "frostman",
            Command::Hardy => "hardy",
            Command::Scan => "scan",
            Command::Example => "example",
        }
    }
}

/// Geometric radii `top · factor^-k` for k in `outer` and `inner`, pairs with
/// R/r below `ratio_min` dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub top: f64,
    pub factor: f64,
    pub outer: [i32; 2],
    pub inner: [i32; 2],
    pub ratio_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    pub center: Vec<f64>,
    pub js: Vec<u32>,
}

/// One experiment. Builder parameters, numeric parameters and the output
/// directory sit side by side; anything a command does not use is ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub builder: Option<String>,
    /// Example name for `example`: "perforated_disk" (alias "8.1"), "punctured_square" or "exterior_ball".
    pub name: Option<String>,

    // Builder parameters.
    pub n: Option<usize>,
    pub h: Option<f64>,
    pub radius: Option<f64>,
    pub half_width: Option<f64>,
    pub j_min: Option<u32>,
    pub j_max: Option<u32>,
    pub depth: Option<usize>,
    pub pad: Option<f64>,
    pub eps: Option<f64>,
    pub length: Option<f64>,
    pub count: Option<usize>,
    pub radial_dim: Option<usize>,

    // Numeric parameters.
    pub p: Option<f64>,
    #[serde(alias = "β")]
    pub beta: Option<f64>,
    pub ps: Option<Vec<f64>>,
    #[serde(alias = "βs")]
    pub betas: Option<Vec<f64>>,
    pub hs: Option<Vec<f64>>,
    pub boundary: Option<hardylab::hardy::Boundary>,
    pub protocol: Option<ProtocolConfig>,
    pub centers: Option<Vec<Vec<f64>>>,
    pub radii: Option<Vec<f64>>,
    #[serde(alias = "δ")]
    pub delta: Option<f64>,
    pub tree_depth: Option<usize>,
    pub child_region: Option<hardylab::frostman::ChildRegion>,
    pub qs: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub tol: Option<f64>,
    pub thin: Option<BallConfig>,
    pub unbounded: Option<bool>,
    pub witness: Option<WitnessConfig>,
    pub max_iter: Option<usize>,
    pub solver_tol: Option<f64>,

    pub out: Option<PathBuf>,
    /// Every algorithm is deterministic; false is rejected.
    pub random_free: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn command(&self) -> Command {
        self.command.expect("validated configs carry a command")
    }

    /// Checks what can be checked without running: a command, a known
    /// builder that supports it, and parameter ranges.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let Some(command) = self.command else {
            return bad("missing \"command\"".into());
        };
        if self.random_free == Some(false) {
            return bad("random_free = false is not supported: every algorithm is deterministic".into());
        }
        match command {
            Command::Example => {
                let name = self.name.as_deref().unwrap_or("");
                if !crate::run::EXAMPLES.contains(&name) {
                    return bad(format!(
                        "unknown example {name:?}; known: {}",
                        crate::run::EXAMPLES.join(", ")
                    ));
                }
                if self.p.is_none() {
                    return bad("example needs \"p\"".into());
                }
            }
            _ => {
                let Some(name) = self.builder.as_deref() else {
                    return bad(format!("{} needs a \"builder\"", command.name()));
                };
                let Some(f) = fixtures::find(name) else {
                    return bad(format!("unknown builder {name:?}; run --list-fixtures"));
                };
                if !f.commands.contains(&command) {
                    return bad(format!("builder {name} does not support {}", command.name()));
                }
            }
        }
        if matches!(command, Command::Hardy) && self.p.is_none() {
            return bad("hardy needs \"p\"".into());
        }
        if matches!(command, Command::Scan) && (self.ps.is_none() || self.betas.is_none()) {
            return bad("scan needs \"ps\" and \"betas\"".into());
        }
        let positive = [
            ("h", self.h),
            ("radius", self.radius),
            ("half_width", self.half_width),
            ("eps", self.eps),
            ("length", self.length),
            ("margin", self.margin),
            ("solver_tol", self.solver_tol),
        ];
        for (k, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{k} must be positive and finite, got {v}"));
                }
            }
        }
        if let Some(p) = self.p {
            if !(p > 1.0 && p.is_finite()) {
                return bad(format!("p must exceed 1, got {p}"));
            }
        }
        if let Some(hs) = &self.hs {
            if hs.len() < 3 || hs.iter().any(|&h| !(h > 0.0)) {
                return bad("hs needs at least 3 positive spacings".into());
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 0.5) {
                return bad(format!("delta must lie in (0, 1/2), got {d}"));
            }
        }
        if self.tree_depth == Some(0) {
            return bad("tree_depth must be at least 1".into());
        }
        if self.tol.is_some_and(|t| !(t >= 0.0)) {
            return bad("tol must be nonnegative".into());
        }
        Ok(())
    }
}
