//! Finite-scale estimators for Assouad and Minkowski dimensions, Assouad
//! codimensions, the Aikawa exponent and Hausdorff content densities.
//!
//! Every estimate keeps the per-window samples it was computed from. An
//! estimate's value is the extremal log-slope over samples with
//! `R / r >= scale_ratio_min`.

mod aikawa;
mod codim;
mod counts;
mod report;

pub use aikawa::{aikawa_critical_exponent, AikawaOptions};
pub use codim::{codimension_estimates, default_centers};
pub use counts::{
    assouad_lower, assouad_upper, content_density_upper, covering_counts, global_samples,
    minkowski_estimates,
};
pub use report::{samples_csv, summary_json};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    AssouadUpper,
    AssouadLower,
    MinkowskiUpper,
    MinkowskiLower,
    CodimLower,
    CodimUpper,
    Aikawa,
    ContentDensity,
}

impl EstimateKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimateKind::AssouadUpper => "assouad_upper",
            EstimateKind::AssouadLower => "assouad_lower",
            EstimateKind::MinkowskiUpper => "minkowski_upper",
            EstimateKind::MinkowskiLower => "minkowski_lower",
            EstimateKind::CodimLower => "codim_lower",
            EstimateKind::CodimUpper => "codim_upper",
            EstimateKind::Aikawa => "aikawa",
            EstimateKind::ContentDensity => "content_density",
        }
    }
}

/// What was measured in one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    /// Maximal r-packing count of E ∩ B(x, R).
    Count(usize),
    /// μ(E_r ∩ B(x, R)) / μ(B(x, R)).
    VolumeRatio(f64),
    /// Window average of (r / dist)^q for the Aikawa integral.
    AikawaAverage { q: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleWindowSample {
    pub center: Vec<f64>,
    /// Outer radius R.
    pub outer: f64,
    /// Inner radius r.
    pub inner: f64,
    pub observation: Observation,
}

impl ScaleWindowSample {
    pub fn ratio(&self) -> f64 {
        self.outer / self.inner
    }

    /// log N / log(R/r) for counts, log(ratio) / log(r/R) for volume ratios.
    pub fn slope(&self) -> f64 {
        match self.observation {
            Observation::Count(n) => (n as f64).ln() / (self.outer / self.inner).ln(),
            Observation::VolumeRatio(v) => v.ln() / (self.inner / self.outer).ln(),
            Observation::AikawaAverage { .. } => f64::NAN,
        }
    }

    pub fn value(&self) -> f64 {
        match self.observation {
            Observation::Count(n) => n as f64,
            Observation::VolumeRatio(v) => v,
            Observation::AikawaAverage { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub kind: EstimateKind,
    pub value: f64,
    pub samples: Vec<ScaleWindowSample>,
    pub scale_ratio_min: f64,
    /// (q, A(q)) pairs, only for the Aikawa estimate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<(f64, f64)>,
}

pub const DEFAULT_SCALE_RATIO_MIN: f64 = 8.0;

/// Outer and inner radii to test. Pairs with `R / r < scale_ratio_min` are
/// skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleProtocol {
    pub outer_radii: Vec<f64>,
    pub inner_radii: Vec<f64>,
    pub scale_ratio_min: f64,
}

impl ScaleProtocol {
    /// Radii `top · factor^-k` for k in `outer_levels` / `inner_levels`.
    pub fn geometric(
        top: f64,
        factor: f64,
        outer_levels: std::ops::RangeInclusive<i32>,
        inner_levels: std::ops::RangeInclusive<i32>,
        scale_ratio_min: f64,
    ) -> Self {
        ScaleProtocol {
            outer_radii: outer_levels.map(|k| top * factor.powi(-k)).collect(),
            inner_radii: inner_levels.map(|k| top * factor.powi(-k)).collect(),
            scale_ratio_min,
        }
    }

    pub(crate) fn admits(&self, outer: f64, inner: f64) -> bool {
        inner < outer && outer / inner >= self.scale_ratio_min * (1.0 - 1e-12)
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &big in &self.outer_radii {
            for &small in &self.inner_radii {
                if self.admits(big, small) {
                    out.push((big, small));
                }
            }
        }
        out
    }
}

pub(crate) fn extremal(
    kind: EstimateKind,
    samples: &[ScaleWindowSample],
    scale_ratio_min: f64,
    take_max: bool,
) -> crate::Result<DimensionEstimate> {
    let kept: Vec<ScaleWindowSample> = samples
        .iter()
        .filter(|s| s.ratio() >= scale_ratio_min * (1.0 - 1e-12))
        .filter(|s| !matches!(s.observation, Observation::AikawaAverage { .. }))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(crate::LabError::Invalid(format!(
            "{}: no samples with R/r >= {scale_ratio_min}",
            kind.name()
        )));
    }
    let slopes = kept.iter().map(|s| s.slope());
    let value = if take_max {
        slopes.fold(f64::NEG_INFINITY, f64::max)
    } else {
        slopes.fold(f64::INFINITY, f64::min)
    };
    Ok(DimensionEstimate {
        kind,
        value: value.max(0.0),
        samples: kept,
        scale_ratio_min,
        profile: Vec::new(),
    })
}
