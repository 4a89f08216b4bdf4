//! Inequality and association statistics across CBGs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catchment::Mode;
use crate::dataset::{CityDataset, Demographic};
use crate::indicators::{IndicatorKind, IndicatorRow};

/// Correlations with |r| at or above this are flagged reportable.
pub const REPORTABLE_R: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquityError {
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("weight {0} must be finite and nonnegative")]
    Weight(f64),
    #[error("total weight is zero")]
    ZeroWeight,
    #[error("negative value {0}")]
    Negative(f64),
    #[error("total value is zero; the Lorenz curve is undefined")]
    ZeroTotal,
    #[error("need at least 3 paired observations, got {0}")]
    TooFew(usize),
    #[error("series lengths differ ({0} vs {1})")]
    Length(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Population,
    Unweighted,
}

impl Weighting {
    pub fn as_str(&self) -> &'static str {
        match self {
            Weighting::Population => "population",
            Weighting::Unweighted => "unweighted",
        }
    }
}

/// (value, weight) pairs kept sorted ascending by value.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeries {
    entries: Vec<(f64, f64)>,
}

impl WeightedSeries {
    pub fn new(mut entries: Vec<(f64, f64)>) -> Result<Self, EquityError> {
        let mut total = 0.0;
        for &(v, w) in &entries {
            if !v.is_finite() {
                return Err(EquityError::NonFinite(v));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(EquityError::Weight(w));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(EquityError::ZeroWeight);
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        Ok(Self { entries })
    }

    pub fn unweighted(values: &[f64]) -> Result<Self, EquityError> {
        Self::new(values.iter().map(|v| (*v, 1.0)).collect())
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Gini coefficient from the trapezoid rule on the weighted Lorenz curve:
/// `G = 1 − Σ_k (X_k − X_{k−1})(Y_k + Y_{k−1})`, where X is the cumulative
/// population share and Y the cumulative value share.
pub fn gini(series: &WeightedSeries) -> Result<f64, EquityError> {
    let (mut w_total, mut v_total) = (0.0, 0.0);
    for &(v, w) in series.entries() {
        if v < 0.0 {
            return Err(EquityError::Negative(v));
        }
        w_total += w;
        v_total += v * w;
    }
    if v_total <= 0.0 {
        return Err(EquityError::ZeroTotal);
    }
    let (mut cw, mut cv, mut area) = (0.0, 0.0, 0.0);
    let (mut x_prev, mut y_prev) = (0.0, 0.0);
    for &(v, w) in series.entries() {
        cw += w;
        cv += v * w;
        let (x, y) = (cw / w_total, cv / v_total);
        area += (x - x_prev) * (y + y_prev);
        (x_prev, y_prev) = (x, y);
    }
    Ok((1.0 - area).max(0.0))
}

/// Product-moment correlation. `Ok(None)` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, EquityError> {
    if x.len() != y.len() {
        return Err(EquityError::Length(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(EquityError::TooFew(n));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(EquityError::NonFinite(*v));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // Deviations that are pure rounding noise of a constant column.
    let flat = |s: f64, m: f64| s <= (1e-12 * m.abs().max(1.0)).powi(2) * n as f64;
    if flat(sxx, mx) || flat(syy, my) {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub indicator: IndicatorKind,
    pub mode: Mode,
    pub variable: Demographic,
    pub r: Option<f64>,
    pub n: usize,
    pub reportable: bool,
    /// Set when `r` is undefined (constant column or fewer than 3 pairs).
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub cells: Vec<CorrelationCell>,
    pub diagnostics: Vec<String>,
}

// Non-null values per (indicator, mode), keyed by CBG index.
fn columns(rows: &[IndicatorRow]) -> BTreeMap<(IndicatorKind, Mode), Vec<(usize, f64)>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for row in rows {
        for kind in IndicatorKind::ALL {
            let entry = out.entry((kind, row.mode)).or_default();
            if let Some(v) = row.set.get(kind) {
                entry.push((row.cbg, v));
            }
        }
    }
    out
}

/// Pearson r of every indicator and mode against every demographic
/// variable, using pairwise-complete observations. Rows are expected to
/// hold one budget per mode.
pub fn correlation_matrix(ds: &CityDataset, rows: &[IndicatorRow]) -> CorrelationMatrix {
    let complete = ds.cbgs().iter().filter(|c| c.has_complete_demographics()).count();
    if complete < 3 {
        return CorrelationMatrix {
            cells: Vec::new(),
            diagnostics: vec![format!(
                "only {complete} CBG(s) with complete demographics; correlations need at least 3"
            )],
        };
    }
    let mut m = CorrelationMatrix::default();
    for ((indicator, mode), values) in columns(rows) {
        for variable in Demographic::ALL {
            let (xs, ys): (Vec<f64>, Vec<f64>) = values
                .iter()
                .filter_map(|&(cbg, v)| ds.cbg(cbg).demographic(variable).map(|d| (v, d)))
                .unzip();
            let r = pearson(&xs, &ys).ok().flatten();
            m.cells.push(CorrelationCell {
                indicator,
                mode,
                variable,
                r,
                n: xs.len(),
                reportable: r.is_some_and(|r| r.abs() >= REPORTABLE_R),
                degenerate: r.is_none(),
            });
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub indicator: IndicatorKind,
    pub mode: Mode,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GiniEntry {
    pub indicator: IndicatorKind,
    pub mode: Mode,
    /// `None` when the Lorenz curve is undefined (see diagnostics).
    pub gini: Option<f64>,
    pub n: usize,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitySummary {
    pub city: String,
    pub stats: Vec<SummaryEntry>,
    pub gini: Vec<GiniEntry>,
    pub diagnostics: Vec<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Mean, median and Gini per indicator and mode over non-null CBG values.
pub fn city_summary(ds: &CityDataset, rows: &[IndicatorRow], weighting: Weighting) -> CitySummary {
    let mut s = CitySummary {
        city: ds.city_id().to_string(),
        stats: Vec::new(),
        gini: Vec::new(),
        diagnostics: Vec::new(),
    };
    for ((indicator, mode), values) in columns(rows) {
        let label = format!("{}/{}", indicator.as_str(), mode);
        if values.is_empty() {
            s.diagnostics.push(format!("{label}: no non-null values, omitted"));
            continue;
        }
        let mut sorted: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        sorted.sort_by(f64::total_cmp);
        s.stats.push(SummaryEntry {
            indicator,
            mode,
            n: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: median(&sorted),
        });
        let weighted = values
            .iter()
            .map(|&(cbg, v)| {
                let w = match weighting {
                    Weighting::Population => ds.cbg(cbg).population as f64,
                    Weighting::Unweighted => 1.0,
                };
                (v, w)
            })
            .collect();
        let g = WeightedSeries::new(weighted).and_then(|series| gini(&series));
        if let Err(e) = &g {
            s.diagnostics.push(format!("{label}: gini undefined: {e}"));
        }
        s.gini.push(GiniEntry {
            indicator,
            mode,
            gini: g.ok(),
            n: values.len(),
            weighting,
        });
    }
    s
}
