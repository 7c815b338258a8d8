//! ROC artifact emission: per-patient operating-point CSVs, a combined
//! summary, and an SVG rendering of every curve.

use anyhow::{bail, Context, Result};
use pf_pipeline::cesp::parse_records_csv;
use pf_pipeline::evalstat::{roc_auc, roc_points, RocPoint};
use pf_pipeline::types::{Label, PredictionRecord};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const ROC_CSV_HEADER: &str = "fpr,tpr,threshold";

/// One curve: the records file it came from (stem) plus the patient.
#[derive(Debug)]
pub struct RocCurve {
    pub source: String,
    pub patient: String,
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

fn curve_csv(points: &[RocPoint]) -> String {
    let mut out = String::from(ROC_CSV_HEADER);
    out.push('\n');
    for p in points {
        let threshold =
            if p.threshold.is_finite() { p.threshold.to_string() } else { "inf".to_string() };
        writeln!(out, "{},{},{threshold}", p.fpr, p.tpr).expect("string write");
    }
    out
}

fn split_by_patient(records: &[PredictionRecord]) -> BTreeMap<String, Vec<&PredictionRecord>> {
    let mut by_patient: BTreeMap<String, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_patient.entry(r.patient_id.clone()).or_default().push(r);
    }
    by_patient
}

/// Scan `records_dir` for `*_records.csv`, compute one ROC per (file,
/// patient), and write the artifacts under `out_dir`: a `roc_<source>_
/// <patient>.csv` per curve, a `summary.csv`, and `roc.svg`. Patients whose
/// test half is single-class are skipped (an ROC needs both classes).
pub fn emit_roc(records_dir: &Path, out_dir: &Path) -> Result<Vec<RocCurve>> {
    let mut record_files: Vec<_> = fs::read_dir(records_dir)
        .with_context(|| format!("reading {}", records_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_records.csv"))
        })
        .collect();
    record_files.sort();
    if record_files.is_empty() {
        bail!("no *_records.csv prediction files found in {}", records_dir.display());
    }

    fs::create_dir_all(out_dir)?;
    let mut curves = Vec::new();
    for file in &record_files {
        let text = fs::read_to_string(file)?;
        let records = parse_records_csv(&text)
            .with_context(|| format!("parsing {}", file.display()))?;
        let source = file
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix("_records.csv"))
            .unwrap_or("records")
            .to_string();
        for (patient, recs) in split_by_patient(&records) {
            let labels: Vec<bool> = recs.iter().map(|r| r.label == Label::Preictal).collect();
            let probs: Vec<f64> = recs.iter().map(|r| r.prob).collect();
            let (points, auc) = match (roc_points(&labels, &probs), roc_auc(&labels, &probs)) {
                (Ok(p), Ok(a)) => (p, a),
                _ => continue, // single-class patient: no curve to draw
            };
            let path = out_dir.join(format!("roc_{source}_{patient}.csv"));
            fs::write(&path, curve_csv(&points))?;
            curves.push(RocCurve { source: source.clone(), patient, auc, points });
        }
    }
    if curves.is_empty() {
        bail!("prediction files in {} contain no two-class patient", records_dir.display());
    }

    let mut summary = String::from("source,patient,auc,points\n");
    for c in &curves {
        writeln!(summary, "{},{},{},{}", c.source, c.patient, c.auc, c.points.len())?;
    }
    fs::write(out_dir.join("summary.csv"), summary)?;
    fs::write(out_dir.join("roc.svg"), render_svg(&curves))?;
    Ok(curves)
}

/// Fixed palette so reruns are byte-identical.
const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

fn render_svg(curves: &[RocCurve]) -> String {
    let (w, h, margin) = (480.0, 480.0, 48.0);
    let span_x = w - 2.0 * margin;
    let span_y = h - 2.0 * margin;
    let x = |fpr: f64| margin + fpr * span_x;
    let y = |tpr: f64| h - margin - tpr * span_y;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    // Axes and the chance diagonal.
    let _ = writeln!(
        svg,
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{span_x}\" height=\"{span_y}\" \
         fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#bbbbbb\" \
         stroke-dasharray=\"4 4\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">false positive rate</text>",
        w / 2.0,
        h - margin / 3.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">\
         true positive rate</text>",
        margin / 3.0,
        h / 2.0,
        margin / 3.0,
        h / 2.0
    );

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> =
            c.points.iter().map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr))).collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{} {} (AUC {:.3})</text>",
            margin + 8.0,
            margin + 16.0 + 14.0 * i as f64,
            c.source,
            c.patient,
            c.auc
        );
    }
    svg.push_str("</svg>\n");
    svg
}
