//! Plain-text and CSV rendering of run results: the cross-validation metrics
//! summary and the per-modality region tables (percentage contribution plus
//! group-comparison statistics).
//!
//! All numeric formatting is fixed-width (`{:.6}` for metrics and
//! percentages, `{:.6e}` for p values) so reports are byte-stable across
//! runs and platforms.

use std::fmt::Write as _;

use crate::attribution::RegionScoreTable;
use crate::stats::TestResult;
use crate::train::CvSummary;

/// Fixed six-decimal rendering for metrics and percentages.
pub fn f6(v: f64) -> String {
    format!("{v:.6}")
}

/// Fixed six-significant-digit scientific rendering for p values and scores.
pub fn pe(v: f64) -> String {
    format!("{v:.6e}")
}

/// One row of the metrics summary: a model label (e.g. `multimodal`) and its
/// cross-validation summary.
pub type MetricsRow = (String, CvSummary);

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(
        "model,accuracy_mean,accuracy_std,precision_mean,precision_std,\
         recall_mean,recall_std,f1_mean,f1_std\n",
    );
    for (label, m) in rows {
        writeln!(
            s,
            "{label},{},{},{},{},{},{},{},{}",
            f6(m.accuracy.mean),
            f6(m.accuracy.std),
            f6(m.precision.mean),
            f6(m.precision.std),
            f6(m.recall.mean),
            f6(m.recall.std),
            f6(m.f1.mean),
            f6(m.f1.std),
        )
        .unwrap();
    }
    s
}

pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let mut s = String::new();
    writeln!(s, "Cross-validation metrics (mean ± std over folds)").unwrap();
    writeln!(s).unwrap();
    let label_w = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(["model".len()])
        .max()
        .unwrap_or(5);
    writeln!(
        s,
        "{:<label_w$}  {:<15}  {:<15}  {:<15}  {:<15}",
        "model", "ACC", "PRE", "REC", "F1"
    )
    .unwrap();
    for (label, m) in rows {
        let cell = |v: &crate::train::MetricSummary| format!("{:.3} ± {:.3}", v.mean, v.std);
        writeln!(
            s,
            "{:<label_w$}  {:<15}  {:<15}  {:<15}  {:<15}",
            label,
            cell(&m.accuracy),
            cell(&m.precision),
            cell(&m.recall),
            cell(&m.f1),
        )
        .unwrap();
    }
    s
}

/// One rendered region row: contribution percentages joined with the group
/// comparison for that region, when available.
#[derive(Debug, Clone)]
pub struct RegionReportRow {
    pub region: String,
    pub pct_within: f64,
    pub pct_across: f64,
    pub stat: Option<TestResult>,
}

/// Joins a score table's top rows (by `order`, as produced by
/// `attribution::top_k`) with test results in the same order.
pub fn region_report_rows(
    table: &RegionScoreTable,
    order: &[usize],
    stats: Option<&[TestResult]>,
) -> Vec<RegionReportRow> {
    order
        .iter()
        .enumerate()
        .map(|(rank, &row)| {
            let r = &table.rows[row];
            RegionReportRow {
                region: r.name.clone(),
                pct_within: r.pct_within,
                pct_across: r.pct_across,
                stat: stats.and_then(|s| s.get(rank).cloned()),
            }
        })
        .collect()
}

/// Table 3-style CSV: one row per ranked region with its contribution
/// percentages and group-comparison statistics.
pub fn regions_csv(rows: &[RegionReportRow]) -> String {
    let mut s = String::from("region,pct_within,pct_across,p,p_fdr,direction\n");
    for r in rows {
        match &r.stat {
            Some(t) => writeln!(
                s,
                "{},{},{},{},{},{}",
                r.region,
                f6(r.pct_within),
                f6(r.pct_across),
                pe(t.p),
                pe(t.p_fdr),
                t.direction.label()
            )
            .unwrap(),
            None => writeln!(
                s,
                "{},{},{},,,",
                r.region,
                f6(r.pct_within),
                f6(r.pct_across)
            )
            .unwrap(),
        }
    }
    s
}

pub fn regions_text(title: &str, rows: &[RegionReportRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{title}").unwrap();
    writeln!(s).unwrap();
    let region_w = rows
        .iter()
        .map(|r| r.region.len())
        .chain(["region".len()])
        .max()
        .unwrap_or(6);
    writeln!(
        s,
        "{:<region_w$}  {:>8}  {:>8}  {:>12}  {:>12}  {}",
        "region", "pct_in", "pct_all", "p", "p_fdr", "direction"
    )
    .unwrap();
    for r in rows {
        match &r.stat {
            Some(t) => writeln!(
                s,
                "{:<region_w$}  {:>8.3}  {:>8.3}  {:>12}  {:>12}  {}",
                r.region,
                r.pct_within,
                r.pct_across,
                pe(t.p),
                pe(t.p_fdr),
                t.direction.label()
            )
            .unwrap(),
            None => writeln!(
                s,
                "{:<region_w$}  {:>8.3}  {:>8.3}  {:>12}  {:>12}  {}",
                r.region, r.pct_within, r.pct_across, "-", "-", "-"
            )
            .unwrap(),
        }
    }
    s
}

/// Full attribution table CSV (every region, signed scores included), as
/// emitted by the explain stage.
pub fn score_table_csv(table: &RegionScoreTable) -> String {
    let mut s = String::from("region,raw,weighted,pct_within,pct_across\n");
    for r in &table.rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.name,
            pe(r.raw),
            pe(r.weighted),
            f6(r.pct_within),
            f6(r.pct_across)
        )
        .unwrap();
    }
    s
}

/// The combined plain-text report: metrics summary followed by one region
/// table per modality.
pub fn render_report(
    metrics: &[MetricsRow],
    sections: &[(String, Vec<RegionReportRow>)],
) -> String {
    let mut s = String::new();
    writeln!(s, "Multimodal classification report").unwrap();
    writeln!(s, "=================================").unwrap();
    writeln!(s).unwrap();
    s.push_str(&metrics_text(metrics));
    for (title, rows) in sections {
        writeln!(s).unwrap();
        s.push_str(&regions_text(title, rows));
    }
    s
}
