//! Evaluation report serialization. The CSV layout is fixed: a header,
//! one row per subject in ascending subject order, then a final
//! `cohort_mean` row averaging every numeric column over the subjects.
//! Numbers are written in Rust's shortest round-trip notation, so a
//! bitwise-reproducible evaluation yields byte-identical files.

use voxelseg::metrics::{EvalReport, RegionReport};

const REGION_PREFIXES: [&str; 3] = ["et", "tc", "wt"];
const REGION_FIELDS: [&str; 8] = [
    "lesionwise_dice",
    "lesionwise_hd95",
    "legacy_dice",
    "legacy_hd95",
    "tp",
    "fp",
    "fn",
    "ignored",
];
const MEAN_FIELDS: [&str; 4] = [
    "mean_lesionwise_dice",
    "mean_lesionwise_hd95",
    "mean_legacy_dice",
    "mean_legacy_hd95",
];

pub fn csv_header() -> String {
    let mut cols = vec!["subject".to_string()];
    for p in REGION_PREFIXES {
        for f in REGION_FIELDS {
            cols.push(format!("{p}_{f}"));
        }
    }
    cols.extend(MEAN_FIELDS.iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Numeric columns of one report, in header order.
fn numeric_columns(r: &EvalReport) -> Vec<f64> {
    let mut out = Vec::with_capacity(28);
    for region in r.regions() {
        out.extend([
            region.lesion_wise_dice,
            region.lesion_wise_hd95,
            region.legacy_dice,
            region.legacy_hd95,
            region.tp as f64,
            region.fp as f64,
            region.fn_count as f64,
            region.ignored as f64,
        ]);
    }
    out.extend([
        r.mean_lesion_wise_dice,
        r.mean_lesion_wise_hd95,
        r.mean_legacy_dice,
        r.mean_legacy_hd95,
    ]);
    out
}

pub fn csv_row(subject: &str, r: &EvalReport) -> String {
    let mut cols = vec![subject.to_string()];
    for region in r.regions() {
        cols.extend([
            region.lesion_wise_dice.to_string(),
            region.lesion_wise_hd95.to_string(),
            region.legacy_dice.to_string(),
            region.legacy_hd95.to_string(),
            region.tp.to_string(),
            region.fp.to_string(),
            region.fn_count.to_string(),
            region.ignored.to_string(),
        ]);
    }
    cols.extend([
        r.mean_lesion_wise_dice.to_string(),
        r.mean_lesion_wise_hd95.to_string(),
        r.mean_legacy_dice.to_string(),
        r.mean_legacy_hd95.to_string(),
    ]);
    cols.join(",")
}

/// Column means over the subjects, in subject order.
pub fn cohort_means(reports: &[(String, EvalReport)]) -> Vec<f64> {
    let n = reports.len() as f64;
    let mut sums = vec![0.0f64; 28];
    for (_, r) in reports {
        for (s, v) in sums.iter_mut().zip(numeric_columns(r)) {
            *s += v;
        }
    }
    sums.iter().map(|s| s / n).collect()
}

pub fn cohort_mean_row(reports: &[(String, EvalReport)]) -> String {
    let mut cols = vec!["cohort_mean".to_string()];
    cols.extend(cohort_means(reports).iter().map(|v| v.to_string()));
    cols.join(",")
}

pub fn csv_document(reports: &[(String, EvalReport)]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for (subject, r) in reports {
        out.push_str(&csv_row(subject, r));
        out.push('\n');
    }
    out.push_str(&cohort_mean_row(reports));
    out.push('\n');
    out
}

fn region_json(r: &RegionReport) -> serde_json::Value {
    serde_json::json!({
        "lesionwise_dice": r.lesion_wise_dice,
        "lesionwise_hd95": r.lesion_wise_hd95,
        "legacy_dice": r.legacy_dice,
        "legacy_hd95": r.legacy_hd95,
        "tp": r.tp,
        "fp": r.fp,
        "fn": r.fn_count,
        "ignored": r.ignored,
    })
}

/// JSON mirror of the CSV: per-subject nested reports plus the flat
/// cohort-mean columns keyed by CSV column name.
pub fn json_document(reports: &[(String, EvalReport)]) -> String {
    let subjects: Vec<serde_json::Value> = reports
        .iter()
        .map(|(subject, r)| {
            serde_json::json!({
                "subject": subject,
                "et": region_json(&r.et),
                "tc": region_json(&r.tc),
                "wt": region_json(&r.wt),
                "mean_lesionwise_dice": r.mean_lesion_wise_dice,
                "mean_lesionwise_hd95": r.mean_lesion_wise_hd95,
                "mean_legacy_dice": r.mean_legacy_dice,
                "mean_legacy_hd95": r.mean_legacy_hd95,
            })
        })
        .collect();
    let header: Vec<String> = csv_header().split(',').skip(1).map(str::to_string).collect();
    let means: serde_json::Map<String, serde_json::Value> = header
        .into_iter()
        .zip(cohort_means(reports))
        .map(|(k, v)| (k, serde_json::json!(v)))
        .collect();
    let doc = serde_json::json!({ "subjects": subjects, "cohort_mean": means });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable report");
    text.push('\n');
    text
}
