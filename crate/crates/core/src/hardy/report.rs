use std::fmt::Write;

use serde_json::{json, Value};

use super::solve::RayleighResult;
use super::study::{AdmissibilityMap, NumericLabel, PredictedLabel, RefinementStudy};

/// `iteration,lambda`, one row per trace entry.
pub fn trace_csv(result: &RayleighResult) -> String {
    let mut out = String::from("iteration,lambda\n");
    for (i, l) in result.trace.iter().enumerate() {
        writeln!(out, "{i},{l}").unwrap();
    }
    out
}

/// Summary of a minimization; the minimizer is included on request.
pub fn result_json(result: &RayleighResult, with_minimizer: bool) -> Value {
    let mut v = json!({
        "lambda": result.lambda,
        "hardy_constant": result.hardy_constant,
        "iterations": result.iterations,
        "residual": result.residual,
        "status": result.status,
        "method": result.method,
    });
    if with_minimizer {
        v["minimizer"] = json!(result.minimizer);
    }
    v
}

/// `h,lambda,ratio,iterations,residual,status`; the ratio is empty on the
/// coarsest level.
pub fn refinement_csv(study: &RefinementStudy) -> String {
    let mut out = String::from("h,lambda,ratio,iterations,residual,status\n");
    for (k, l) in study.levels.iter().enumerate() {
        let ratio = if k == 0 {
            String::new()
        } else {
            study.ratios[k - 1].to_string()
        };
        let status = serde_json::to_value(l.status).unwrap();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            l.scale,
            l.lambda,
            ratio,
            l.iterations,
            l.residual,
            status.as_str().unwrap()
        )
        .unwrap();
    }
    out
}

/// `p,beta,predicted,numeric,slope,lambda_finest,witness_certifies,disagreement`.
pub fn admissibility_csv(map: &AdmissibilityMap) -> String {
    let mut out = String::from("p,beta,predicted,numeric,slope,lambda_finest,witness_certifies,disagreement\n");
    for pt in &map.points {
        let finest = pt.study.levels.last().map_or(f64::NAN, |l| l.lambda);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            pt.p,
            pt.beta,
            pt.predicted.name(),
            pt.numeric.name(),
            pt.study.slope,
            finest,
            pt.study.witness_certifies,
            pt.disagreement
        )
        .unwrap();
    }
    out
}

fn numeric_color(label: NumericLabel) -> &'static str {
    match label {
        NumericLabel::HoldsEvidence => "#4c9f50",
        NumericLabel::FailsEvidence => "#c8453c",
        NumericLabel::Inconclusive => "#b0b0b0",
    }
}

fn predicted_mark(label: PredictedLabel) -> &'static str {
    match label {
        PredictedLabel::Admits => "A",
        PredictedLabel::Fails => "F",
        PredictedLabel::Boundary => "B",
        PredictedLabel::OutOfTheory => "-",
    }
}

/// Heat map over (β, p): fill is the numeric label, the letter the
/// prediction, a thick outline a disagreement.
pub fn admissibility_svg(map: &AdmissibilityMap) -> String {
    const CELL: usize = 60;
    const LEFT: usize = 70;
    const TOP: usize = 30;
    let (nb, np) = (map.betas.len(), map.ps.len());
    let width = LEFT + CELL * nb + 20;
    let height = TOP + CELL * np + 60;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="18">numeric label (fill), predicted label (letter)</text>"#, LEFT).unwrap();
    for (ip, &p) in map.ps.iter().enumerate() {
        // Largest p on top.
        let y = TOP + CELL * (np - 1 - ip);
        writeln!(s, r#"<text x="8" y="{}">p={}</text>"#, y + CELL / 2 + 4, p).unwrap();
        for (ib, &b) in map.betas.iter().enumerate() {
            let x = LEFT + CELL * ib;
            let Some(pt) = map.get(p, b) else { continue };
            let stroke = if pt.disagreement { 4 } else { 1 };
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#000" stroke-width="{stroke}"/>"##,
                numeric_color(pt.numeric)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="20">{}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 7,
                predicted_mark(pt.predicted)
            )
            .unwrap();
        }
    }
    let base = TOP + CELL * np;
    for (ib, &b) in map.betas.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">β={}</text>"#,
            LEFT + CELL * ib + CELL / 2,
            base + 18,
            b
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}">A admits, F fails, B boundary, - out of theory; margin {}</text>"#,
        LEFT,
        base + 45,
        map.margin
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
