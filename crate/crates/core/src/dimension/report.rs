use serde_json::{json, Value};

use super::DimensionEstimate;

fn join_coords(c: &[f64]) -> String {
    c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Per-sample table: kind, x, R, r, N_or_ratio, slope. Coordinates of x are
/// joined with ';'.
pub fn samples_csv(estimates: &[&DimensionEstimate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "x", "R", "r", "N_or_ratio", "slope"]).unwrap();
    for est in estimates {
        for s in &est.samples {
            let slope = s.slope();
            w.write_record([
                est.kind.name().to_string(),
                join_coords(&s.center),
                s.outer.to_string(),
                s.inner.to_string(),
                s.value().to_string(),
                if slope.is_finite() { slope.to_string() } else { String::new() },
            ])
            .unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Values and scale ranges per estimate.
pub fn summary_json(estimates: &[&DimensionEstimate]) -> Value {
    let mut out = serde_json::Map::new();
    for est in estimates {
        let fold = |f: fn(&super::ScaleWindowSample) -> f64, init: f64, g: fn(f64, f64) -> f64| {
            est.samples.iter().map(f).fold(init, g)
        };
        let mut entry = json!({
            "value": est.value,
            "scale_ratio_min": est.scale_ratio_min,
            "samples": est.samples.len(),
            "R_min": fold(|s| s.outer, f64::INFINITY, f64::min),
            "R_max": fold(|s| s.outer, 0.0, f64::max),
            "r_min": fold(|s| s.inner, f64::INFINITY, f64::min),
            "r_max": fold(|s| s.inner, 0.0, f64::max),
        });
        if !est.profile.is_empty() {
            entry["profile"] = json!(est.profile);
        }
        out.insert(est.kind.name().to_string(), entry);
    }
    Value::Object(out)
}
