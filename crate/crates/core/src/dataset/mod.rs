//! City inputs: POIs, census block groups (CBGs) and CBG→POI activity flows.
//!
//! A [`CityDataset`] is immutable once built. Records are kept sorted by id
//! (flows by `(cbg_id, poi_id)`) so every downstream iteration order is
//! deterministic.

pub(crate) mod io;
mod synth;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub use io::{
    canonical_csv, load_city, scan_city, validate_city, write_canonical, CanonicalFiles, CityPaths, Issue, IssueKind,
    LoadStats, QualityConfig, Scan,
};
pub use synth::{
    far_subcategory, near_subcategory, reference_category_weights, synth_city, PlantSpec, SynthSpec, FAR_LABEL,
    NEAR_LABEL,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{file}:{line}: column '{column}': {message}")]
    Schema {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{file}: unresolved references: {}", ids.join(", "))]
    Referential { file: String, ids: Vec<String> },
    #[error("duplicate {kind} id '{id}'")]
    Duplicate { kind: &'static str, id: String },
    #[error("parent POI '{0}' must be filtered before building a dataset")]
    ParentPoi(String),
    #[error("POI '{0}' has an empty subcategory")]
    EmptySubcategory(String),
    #[error("flow {cbg_id} -> {poi_id} has zero visits")]
    ZeroVisits { cbg_id: String, poi_id: String },
    #[error("dataset has no POIs")]
    EmptyPois,
    #[error("infeasible synthetic city: {0}")]
    Infeasible(String),
}

/// The eight essential function types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionCategory {
    Restaurants,
    Service,
    Religious,
    Grocery,
    Recreation,
    Health,
    Greenspace,
    Education,
}

impl FunctionCategory {
    pub const ALL: [FunctionCategory; 8] = [
        FunctionCategory::Restaurants,
        FunctionCategory::Service,
        FunctionCategory::Religious,
        FunctionCategory::Grocery,
        FunctionCategory::Recreation,
        FunctionCategory::Health,
        FunctionCategory::Greenspace,
        FunctionCategory::Education,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionCategory::Restaurants => "restaurants",
            FunctionCategory::Service => "service",
            FunctionCategory::Religious => "religious",
            FunctionCategory::Grocery => "grocery",
            FunctionCategory::Recreation => "recreation",
            FunctionCategory::Health => "health",
            FunctionCategory::Greenspace => "greenspace",
            FunctionCategory::Education => "education",
        }
    }
}

impl fmt::Display for FunctionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_label(s);
        FunctionCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

/// Canonical form of a free-form label: trimmed, inner whitespace collapsed
/// to single spaces, lowercase.
pub fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRecord {
    pub poi_id: String,
    pub location: GeoPoint,
    pub category: FunctionCategory,
    /// Normalized finest function label, see [`normalize_label`].
    pub subcategory: String,
    /// Observed visits over the study window; doubles as the capacity proxy.
    pub total_visits: u64,
    pub is_parent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbgRecord {
    pub cbg_id: String,
    pub centroid: GeoPoint,
    pub population: u64,
    pub median_income: Option<f64>,
    pub pct_white: Option<f64>,
    pub pct_black: Option<f64>,
    pub pct_asian: Option<f64>,
    pub pct_hispanic: Option<f64>,
}

/// Socio-demographic columns used for correlation analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demographic {
    MedianIncome,
    PctWhite,
    PctBlack,
    PctAsian,
    PctHispanic,
}

impl Demographic {
    pub const ALL: [Demographic; 5] = [
        Demographic::MedianIncome,
        Demographic::PctWhite,
        Demographic::PctBlack,
        Demographic::PctAsian,
        Demographic::PctHispanic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Demographic::MedianIncome => "median_income",
            Demographic::PctWhite => "pct_white",
            Demographic::PctBlack => "pct_black",
            Demographic::PctAsian => "pct_asian",
            Demographic::PctHispanic => "pct_hispanic",
        }
    }
}

impl CbgRecord {
    pub fn demographic(&self, var: Demographic) -> Option<f64> {
        match var {
            Demographic::MedianIncome => self.median_income,
            Demographic::PctWhite => self.pct_white,
            Demographic::PctBlack => self.pct_black,
            Demographic::PctAsian => self.pct_asian,
            Demographic::PctHispanic => self.pct_hispanic,
        }
    }

    pub fn has_complete_demographics(&self) -> bool {
        Demographic::ALL.iter().all(|v| self.demographic(*v).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub cbg_id: String,
    pub poi_id: String,
    pub visits: u64,
}

/// A flow with both endpoints resolved to dataset indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedFlow {
    pub poi: usize,
    pub visits: u64,
}

/// Validated, sorted and indexed inputs for one city.
#[derive(Debug, Clone)]
pub struct CityDataset {
    city_id: String,
    pois: Vec<PoiRecord>,
    cbgs: Vec<CbgRecord>,
    flows: Vec<FlowRecord>,
    poi_index: HashMap<String, usize>,
    cbg_index: HashMap<String, usize>,
    resolved: Vec<ResolvedFlow>,
    cbg_flow_start: Vec<usize>,
    poi_group: Vec<u32>,
    groups: Vec<(FunctionCategory, String)>,
}

impl PartialEq for CityDataset {
    fn eq(&self, other: &Self) -> bool {
        self.city_id == other.city_id && self.pois == other.pois && self.cbgs == other.cbgs && self.flows == other.flows
    }
}

impl CityDataset {
    /// Builds a dataset, sorting records by id and checking uniqueness,
    /// referential integrity, and the absence of parent POIs.
    pub fn new(
        city_id: impl Into<String>,
        mut pois: Vec<PoiRecord>,
        mut cbgs: Vec<CbgRecord>,
        mut flows: Vec<FlowRecord>,
    ) -> Result<Self, DatasetError> {
        pois.sort_by(|a, b| a.poi_id.cmp(&b.poi_id));
        cbgs.sort_by(|a, b| a.cbg_id.cmp(&b.cbg_id));
        flows.sort_by(|a, b| (&a.cbg_id, &a.poi_id).cmp(&(&b.cbg_id, &b.poi_id)));

        let mut poi_index = HashMap::with_capacity(pois.len());
        let mut group_index: HashMap<(FunctionCategory, String), u32> = HashMap::new();
        let mut groups = Vec::new();
        let mut poi_group = Vec::with_capacity(pois.len());
        for (i, poi) in pois.iter_mut().enumerate() {
            if poi.is_parent {
                return Err(DatasetError::ParentPoi(poi.poi_id.clone()));
            }
            poi.subcategory = normalize_label(&poi.subcategory);
            if poi.subcategory.is_empty() {
                return Err(DatasetError::EmptySubcategory(poi.poi_id.clone()));
            }
            if poi_index.insert(poi.poi_id.clone(), i).is_some() {
                return Err(DatasetError::Duplicate {
                    kind: "POI",
                    id: poi.poi_id.clone(),
                });
            }
            let key = (poi.category, poi.subcategory.clone());
            let g = *group_index.entry(key.clone()).or_insert_with(|| {
                groups.push(key);
                (groups.len() - 1) as u32
            });
            poi_group.push(g);
        }

        let mut cbg_index = HashMap::with_capacity(cbgs.len());
        for (i, cbg) in cbgs.iter().enumerate() {
            if cbg_index.insert(cbg.cbg_id.clone(), i).is_some() {
                return Err(DatasetError::Duplicate {
                    kind: "CBG",
                    id: cbg.cbg_id.clone(),
                });
            }
        }

        let mut dangling = Vec::new();
        let mut resolved = Vec::with_capacity(flows.len());
        let mut cbg_flow_start = vec![0usize; cbgs.len() + 1];
        for (i, flow) in flows.iter().enumerate() {
            if i > 0 && flows[i - 1].cbg_id == flow.cbg_id && flows[i - 1].poi_id == flow.poi_id {
                return Err(DatasetError::Duplicate {
                    kind: "flow",
                    id: format!("{}->{}", flow.cbg_id, flow.poi_id),
                });
            }
            if flow.visits == 0 {
                return Err(DatasetError::ZeroVisits {
                    cbg_id: flow.cbg_id.clone(),
                    poi_id: flow.poi_id.clone(),
                });
            }
            match (cbg_index.get(&flow.cbg_id), poi_index.get(&flow.poi_id)) {
                (Some(&c), Some(&p)) => {
                    cbg_flow_start[c + 1] += 1;
                    resolved.push(ResolvedFlow {
                        poi: p,
                        visits: flow.visits,
                    });
                }
                (c, p) => {
                    if c.is_none() {
                        dangling.push(flow.cbg_id.clone());
                    }
                    if p.is_none() {
                        dangling.push(flow.poi_id.clone());
                    }
                }
            }
        }
        if !dangling.is_empty() {
            dangling.sort();
            dangling.dedup();
            return Err(DatasetError::Referential {
                file: "flows".into(),
                ids: dangling,
            });
        }
        for i in 1..cbg_flow_start.len() {
            cbg_flow_start[i] += cbg_flow_start[i - 1];
        }

        Ok(Self {
            city_id: city_id.into(),
            pois,
            cbgs,
            flows,
            poi_index,
            cbg_index,
            resolved,
            cbg_flow_start,
            poi_group,
            groups,
        })
    }

    pub fn city_id(&self) -> &str {
        &self.city_id
    }

    pub fn pois(&self) -> &[PoiRecord] {
        &self.pois
    }

    pub fn cbgs(&self) -> &[CbgRecord] {
        &self.cbgs
    }

    pub fn flows(&self) -> &[FlowRecord] {
        &self.flows
    }

    pub fn poi(&self, idx: usize) -> &PoiRecord {
        &self.pois[idx]
    }

    pub fn cbg(&self, idx: usize) -> &CbgRecord {
        &self.cbgs[idx]
    }

    pub fn poi_idx(&self, poi_id: &str) -> Option<usize> {
        self.poi_index.get(poi_id).copied()
    }

    pub fn cbg_idx(&self, cbg_id: &str) -> Option<usize> {
        self.cbg_index.get(cbg_id).copied()
    }

    /// Flows originating in CBG `cbg`, ascending by POI id.
    pub fn flows_of(&self, cbg: usize) -> &[ResolvedFlow] {
        &self.resolved[self.cbg_flow_start[cbg]..self.cbg_flow_start[cbg + 1]]
    }

    /// Total activities of a CBG (the denominator of the activity shares).
    pub fn act_city(&self, cbg: usize) -> u64 {
        self.flows_of(cbg).iter().map(|f| f.visits).sum()
    }

    /// Interned `(category, subcategory)` group of a POI.
    pub fn poi_group(&self, idx: usize) -> u32 {
        self.poi_group[idx]
    }

    pub fn group(&self, group: u32) -> (FunctionCategory, &str) {
        let (c, s) = &self.groups[group as usize];
        (*c, s.as_str())
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub category: FunctionCategory,
    pub count: usize,
    pub fraction: f64,
}

/// Composition of the essential POI stock by function category. All eight
/// categories are listed, in declaration order.
pub fn essential_share(ds: &CityDataset) -> Result<Vec<CategoryShare>, DatasetError> {
    let total = ds.pois.len();
    if total == 0 {
        return Err(DatasetError::EmptyPois);
    }
    let mut counts = [0usize; 8];
    for poi in &ds.pois {
        counts[poi.category as usize] += 1;
    }
    Ok(FunctionCategory::ALL
        .iter()
        .map(|&category| {
            let count = counts[category as usize];
            CategoryShare {
                category,
                count,
                fraction: count as f64 / total as f64,
            }
        })
        .collect())
}
