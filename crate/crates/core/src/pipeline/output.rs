use serde_json::{json, Value};

use super::RunConfig;
use crate::dataset::io::render;
use crate::dataset::{essential_share, CityDataset};
use crate::equity::{CitySummary, CorrelationMatrix};
use crate::indicators::{IndicatorKind, IndicatorRow};

/// Deterministic outputs, in the order they are written and digested.
pub const OUTPUT_FILES: [&str; 4] = ["indicators.csv", "gini.csv", "correlations.csv", "summary.json"];
pub(super) const REPORT_FILE: &str = "run_report.json";

const DECIMALS: usize = 9;

/// Fixed nine-decimal rendering; values that round to zero print unsigned.
pub fn fmt_decimal(v: f64) -> String {
    let s = format!("{v:.DECIMALS$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_decimal).unwrap_or_default()
}

// JSON number rounded to the same precision as the CSV files.
fn num(v: f64) -> Value {
    let r = (v * 1e9).round() / 1e9;
    json!(if r == 0.0 { 0.0 } else { r })
}

pub(super) fn indicators_csv(ds: &CityDataset, rows: &[IndicatorRow]) -> String {
    render(
        &[
            "cbg_id",
            "mode",
            "num_poi",
            "pct_act_15min",
            "pct_act_sat_15min",
            "pct_reduced_dist",
            "pct_reduced_carbon",
        ],
        rows.iter().map(|r| {
            vec![
                ds.cbg(r.cbg).cbg_id.clone(),
                r.mode.to_string(),
                r.set.num_poi.to_string(),
                opt(r.set.pct_act_15min),
                opt(r.set.pct_act_sat_15min),
                opt(r.set.pct_reduced_dist),
                opt(r.set.pct_reduced_carbon),
            ]
        }),
    )
}

pub(super) fn gini_csv(summary: &CitySummary) -> String {
    render(
        &["city", "indicator", "mode", "gini", "n", "weighting"],
        summary.gini.iter().map(|g| {
            vec![
                summary.city.clone(),
                g.indicator.as_str().to_string(),
                g.mode.to_string(),
                opt(g.gini),
                g.n.to_string(),
                g.weighting.as_str().to_string(),
            ]
        }),
    )
}

pub(super) fn correlations_csv(city: &str, m: &CorrelationMatrix) -> String {
    render(
        &["city", "indicator", "mode", "variable", "r", "n", "reportable"],
        m.cells.iter().map(|c| {
            vec![
                city.to_string(),
                c.indicator.as_str().to_string(),
                c.mode.to_string(),
                c.variable.as_str().to_string(),
                opt(c.r),
                c.n.to_string(),
                c.reportable.to_string(),
            ]
        }),
    )
}

pub(super) fn summary_json(
    ds: &CityDataset,
    cfg: &RunConfig,
    rows: &[IndicatorRow],
    summary: &CitySummary,
    correlations: &CorrelationMatrix,
) -> String {
    let stats: Vec<Value> = summary
        .stats
        .iter()
        .map(|s| {
            json!({
                "indicator": s.indicator.as_str(),
                "mode": s.mode.as_str(),
                "n": s.n,
                "mean": num(s.mean),
                "median": num(s.median),
            })
        })
        .collect();
    let gini: Vec<Value> = summary
        .gini
        .iter()
        .map(|g| {
            json!({
                "indicator": g.indicator.as_str(),
                "mode": g.mode.as_str(),
                "gini": g.gini.map(num),
                "n": g.n,
                "weighting": g.weighting.as_str(),
            })
        })
        .collect();
    let composition: Vec<Value> = essential_share(ds)
        .map(|v| {
            v.iter()
                .map(|c| json!({"category": c.category.as_str(), "count": c.count, "fraction": num(c.fraction)}))
                .collect()
        })
        .unwrap_or_default();
    let reportable: Vec<Value> = correlations
        .cells
        .iter()
        .filter(|c| c.reportable)
        .map(|c| {
            json!({
                "indicator": c.indicator.as_str(),
                "mode": c.mode.as_str(),
                "variable": c.variable.as_str(),
                "r": c.r.map(num),
                "n": c.n,
            })
        })
        .collect();
    let mut processed: Vec<usize> = rows.iter().map(|r| r.cbg).collect();
    processed.dedup();
    let doc = json!({
        "city": summary.city,
        "provider": cfg.provider.kind.as_str(),
        "budget_min": num(cfg.budget_min),
        "modes": cfg.modes.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "weighting": cfg.weighting.as_str(),
        "cbgs": ds.cbgs().len(),
        "cbgs_with_activity": processed.len(),
        "pois": ds.pois().len(),
        "indicators": IndicatorKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
        "essential_composition": composition,
        "stats": stats,
        "gini": gini,
        "reportable_correlations": reportable,
        "diagnostics": summary.diagnostics.iter().chain(&correlations.diagnostics).collect::<Vec<_>>(),
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}
