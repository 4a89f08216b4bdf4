use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_label, CbgRecord, CityDataset, DatasetError, FlowRecord, FunctionCategory, PoiRecord};
use crate::geo::GeoPoint;

const POI_COLUMNS: [&str; 7] = [
    "poi_id",
    "lat",
    "lon",
    "category",
    "subcategory",
    "total_visits",
    "is_parent",
];
const CBG_COLUMNS: [&str; 9] = [
    "cbg_id",
    "lat",
    "lon",
    "population",
    "median_income",
    "pct_white",
    "pct_black",
    "pct_asian",
    "pct_hispanic",
];
const FLOW_COLUMNS: [&str; 3] = ["cbg_id", "poi_id", "visits"];

/// Locations of the three input tables of one city.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityPaths {
    pub pois: PathBuf,
    pub cbgs: PathBuf,
    pub flows: PathBuf,
}

impl CityPaths {
    /// `pois.csv`, `cbgs.csv` and `flows.csv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            pois: dir.join("pois.csv"),
            cbgs: dir.join("cbgs.csv"),
            flows: dir.join("flows.csv"),
        }
    }
}

/// Data-quality filters applied at load time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    /// Flows with fewer visits than this are dropped (inclusive keep).
    pub min_visits: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self { min_visits: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Schema,
    Duplicate,
    Referential,
    ParentPoi,
    BelowMinVisits,
}

impl IssueKind {
    /// Issues that make a file set unloadable (as opposed to rows the
    /// quality filters simply drop).
    pub fn is_fatal(&self) -> bool {
        matches!(self, IssueKind::Schema | IssueKind::Duplicate | IssueKind::Referential)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            IssueKind::Schema => "schema",
            IssueKind::Duplicate => "duplicate",
            IssueKind::Referential => "referential",
            IssueKind::ParentPoi => "parent_poi",
            IssueKind::BelowMinVisits => "below_min_visits",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub file: String,
    pub line: u64,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.kind.as_str())?;
        if let Some(col) = &self.column {
            write!(f, " [{col}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Everything parsed from a file set, with every problem found. Rows with
/// schema errors are omitted from the record lists.
#[derive(Debug, Default)]
pub struct Scan {
    pub pois: Vec<(u64, PoiRecord)>,
    pub cbgs: Vec<(u64, CbgRecord)>,
    pub flows: Vec<(u64, FlowRecord)>,
    pub issues: Vec<Issue>,
    /// Ids referenced by flows but absent from their table.
    pub dangling_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub pois_read: usize,
    pub cbgs_read: usize,
    pub flows_read: usize,
    pub parent_pois_dropped: usize,
    pub parent_flows_dropped: usize,
    pub below_min_flows_dropped: usize,
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path, required: &[&str], issues: &mut Vec<Issue>) -> Result<Option<Table>, DatasetError> {
    let file = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let headers = rdr
        .headers()
        .map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let columns: HashMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect();
    let missing: Vec<&str> = required.iter().copied().filter(|c| !columns.contains_key(*c)).collect();
    if !missing.is_empty() {
        for col in missing {
            issues.push(Issue {
                kind: IssueKind::Schema,
                file: file.clone(),
                line: 1,
                column: Some(col.to_string()),
                message: "required column missing from header".into(),
            });
        }
        return Ok(None);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| DatasetError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(Some(Table { file, columns, rows }))
}

struct Row<'a> {
    table: &'a Table,
    line: u64,
    rec: &'a csv::StringRecord,
}

impl<'a> Row<'a> {
    fn raw(&self, col: &str) -> &'a str {
        self.rec.get(self.table.columns[col]).unwrap_or("")
    }

    fn fail(&self, col: &str, message: impl Into<String>) -> Issue {
        Issue {
            kind: IssueKind::Schema,
            file: self.table.file.clone(),
            line: self.line,
            column: Some(col.to_string()),
            message: message.into(),
        }
    }

    fn id(&self, col: &str) -> Result<String, Issue> {
        let v = self.raw(col);
        if v.is_empty() {
            Err(self.fail(col, "empty id"))
        } else {
            Ok(v.to_string())
        }
    }

    fn float(&self, col: &str) -> Result<f64, Issue> {
        let v = self.raw(col);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.fail(col, format!("expected a finite number, got '{v}'")))
    }

    fn optional_float(&self, col: &str) -> Result<Option<f64>, Issue> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.float(col).map(Some)
        }
    }

    fn fraction(&self, col: &str) -> Result<Option<f64>, Issue> {
        match self.optional_float(col)? {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(self.fail(col, format!("fraction {x} outside [0, 1]"))),
            other => Ok(other),
        }
    }

    fn count(&self, col: &str) -> Result<u64, Issue> {
        let v = self.raw(col);
        v.parse::<u64>()
            .map_err(|_| self.fail(col, format!("expected a nonnegative integer, got '{v}'")))
    }

    fn flag(&self, col: &str) -> Result<bool, Issue> {
        match self.raw(col).to_ascii_lowercase().as_str() {
            "true" | "t" | "1" | "yes" => Ok(true),
            "false" | "f" | "0" | "no" | "" => Ok(false),
            other => Err(self.fail(col, format!("expected a boolean, got '{other}'"))),
        }
    }

    fn point(&self) -> Result<GeoPoint, Issue> {
        let lat = self.float("lat")?;
        let lon = self.float("lon")?;
        GeoPoint::new(lat, lon).map_err(|e| {
            let col = if matches!(e, crate::geo::GeoError::Latitude(_)) {
                "lat"
            } else {
                "lon"
            };
            self.fail(col, e.to_string())
        })
    }
}

fn parse_poi(row: &Row) -> Result<PoiRecord, Issue> {
    let poi_id = row.id("poi_id")?;
    let location = row.point()?;
    let category = row
        .raw("category")
        .parse::<FunctionCategory>()
        .map_err(|e| row.fail("category", e))?;
    let subcategory = normalize_label(row.raw("subcategory"));
    if subcategory.is_empty() {
        return Err(row.fail("subcategory", "empty subcategory"));
    }
    Ok(PoiRecord {
        poi_id,
        location,
        category,
        subcategory,
        total_visits: row.count("total_visits")?,
        is_parent: row.flag("is_parent")?,
    })
}

fn parse_cbg(row: &Row) -> Result<CbgRecord, Issue> {
    let median_income = row.optional_float("median_income")?;
    if let Some(m) = median_income {
        if m < 0.0 {
            return Err(row.fail("median_income", "negative income"));
        }
    }
    Ok(CbgRecord {
        cbg_id: row.id("cbg_id")?,
        centroid: row.point()?,
        population: row.count("population")?,
        median_income,
        pct_white: row.fraction("pct_white")?,
        pct_black: row.fraction("pct_black")?,
        pct_asian: row.fraction("pct_asian")?,
        pct_hispanic: row.fraction("pct_hispanic")?,
    })
}

fn parse_flow(row: &Row) -> Result<FlowRecord, Issue> {
    let visits = row.count("visits")?;
    if visits == 0 {
        return Err(row.fail("visits", "visits must be positive"));
    }
    Ok(FlowRecord {
        cbg_id: row.id("cbg_id")?,
        poi_id: row.id("poi_id")?,
        visits,
    })
}

/// Parses all three tables and records every schema, duplicate, referential
/// and quality-filter issue without stopping at the first one. Only I/O
/// failures and malformed CSV framing abort the scan.
pub fn scan_city(paths: &CityPaths, config: &QualityConfig) -> Result<Scan, DatasetError> {
    let mut scan = Scan::default();

    let poi_table = read_table(&paths.pois, &POI_COLUMNS, &mut scan.issues)?;
    let cbg_table = read_table(&paths.cbgs, &CBG_COLUMNS, &mut scan.issues)?;
    let flow_table = read_table(&paths.flows, &FLOW_COLUMNS, &mut scan.issues)?;

    let mut parents: HashSet<String> = HashSet::new();
    let mut poi_ids: HashSet<String> = HashSet::new();
    if let Some(table) = &poi_table {
        for (line, rec) in &table.rows {
            let row = Row {
                table,
                line: *line,
                rec,
            };
            match parse_poi(&row) {
                Ok(poi) => {
                    if !poi_ids.insert(poi.poi_id.clone()) {
                        scan.issues.push(Issue {
                            kind: IssueKind::Duplicate,
                            file: table.file.clone(),
                            line: *line,
                            column: Some("poi_id".into()),
                            message: format!("duplicate POI id '{}'", poi.poi_id),
                        });
                        continue;
                    }
                    if poi.is_parent {
                        parents.insert(poi.poi_id.clone());
                        scan.issues.push(Issue {
                            kind: IssueKind::ParentPoi,
                            file: table.file.clone(),
                            line: *line,
                            column: Some("is_parent".into()),
                            message: format!("parent POI '{}' and its flows are excluded", poi.poi_id),
                        });
                    }
                    scan.pois.push((*line, poi));
                }
                Err(issue) => scan.issues.push(issue),
            }
        }
    }

    let mut cbg_ids: HashSet<String> = HashSet::new();
    if let Some(table) = &cbg_table {
        for (line, rec) in &table.rows {
            let row = Row {
                table,
                line: *line,
                rec,
            };
            match parse_cbg(&row) {
                Ok(cbg) => {
                    if !cbg_ids.insert(cbg.cbg_id.clone()) {
                        scan.issues.push(Issue {
                            kind: IssueKind::Duplicate,
                            file: table.file.clone(),
                            line: *line,
                            column: Some("cbg_id".into()),
                            message: format!("duplicate CBG id '{}'", cbg.cbg_id),
                        });
                        continue;
                    }
                    scan.cbgs.push((*line, cbg));
                }
                Err(issue) => scan.issues.push(issue),
            }
        }
    }

    if let Some(table) = &flow_table {
        let mut pairs: HashSet<(String, String)> = HashSet::new();
        for (line, rec) in &table.rows {
            let row = Row {
                table,
                line: *line,
                rec,
            };
            let flow = match parse_flow(&row) {
                Ok(f) => f,
                Err(issue) => {
                    scan.issues.push(issue);
                    continue;
                }
            };
            let mut dangling = false;
            for (col, id, known) in [
                ("cbg_id", &flow.cbg_id, cbg_ids.contains(&flow.cbg_id)),
                ("poi_id", &flow.poi_id, poi_ids.contains(&flow.poi_id)),
            ] {
                if !known {
                    dangling = true;
                    scan.dangling_ids.insert(id.clone());
                    scan.issues.push(Issue {
                        kind: IssueKind::Referential,
                        file: table.file.clone(),
                        line: *line,
                        column: Some(col.into()),
                        message: format!("unknown id '{id}'"),
                    });
                }
            }
            if dangling {
                continue;
            }
            if !pairs.insert((flow.cbg_id.clone(), flow.poi_id.clone())) {
                scan.issues.push(Issue {
                    kind: IssueKind::Duplicate,
                    file: table.file.clone(),
                    line: *line,
                    column: None,
                    message: format!("duplicate flow {} -> {}", flow.cbg_id, flow.poi_id),
                });
                continue;
            }
            if flow.visits < config.min_visits && !parents.contains(&flow.poi_id) {
                scan.issues.push(Issue {
                    kind: IssueKind::BelowMinVisits,
                    file: table.file.clone(),
                    line: *line,
                    column: Some("visits".into()),
                    message: format!("{} visits below minimum {}", flow.visits, config.min_visits),
                });
            }
            scan.flows.push((*line, flow));
        }
    }

    Ok(scan)
}

/// All diagnostics for a file set; an empty list means the inputs are clean.
pub fn validate_city(paths: &CityPaths, config: &QualityConfig) -> Result<Vec<Issue>, DatasetError> {
    Ok(scan_city(paths, config)?.issues)
}

/// Loads and filters a city: parent POIs and their flows are dropped, as are
/// flows with fewer than `min_visits` visits.
pub fn load_city(
    city_id: &str,
    paths: &CityPaths,
    config: &QualityConfig,
) -> Result<(CityDataset, LoadStats), DatasetError> {
    let scan = scan_city(paths, config)?;

    if let Some(issue) = scan
        .issues
        .iter()
        .find(|i| matches!(i.kind, IssueKind::Schema | IssueKind::Duplicate))
    {
        return Err(DatasetError::Schema {
            file: issue.file.clone(),
            line: issue.line,
            column: issue.column.clone().unwrap_or_default(),
            message: issue.message.clone(),
        });
    }
    if !scan.dangling_ids.is_empty() {
        return Err(DatasetError::Referential {
            file: paths.flows.display().to_string(),
            ids: scan.dangling_ids.iter().cloned().collect(),
        });
    }

    let mut stats = LoadStats {
        pois_read: scan.pois.len(),
        cbgs_read: scan.cbgs.len(),
        flows_read: scan.flows.len(),
        ..LoadStats::default()
    };
    let parents: HashSet<&str> = scan
        .pois
        .iter()
        .filter(|(_, p)| p.is_parent)
        .map(|(_, p)| p.poi_id.as_str())
        .collect();
    stats.parent_pois_dropped = parents.len();

    let mut flows = Vec::with_capacity(scan.flows.len());
    for (_, flow) in &scan.flows {
        if parents.contains(flow.poi_id.as_str()) {
            stats.parent_flows_dropped += 1;
        } else if flow.visits < config.min_visits {
            stats.below_min_flows_dropped += 1;
        } else {
            flows.push(flow.clone());
        }
    }
    let pois = scan.pois.into_iter().map(|(_, p)| p).filter(|p| !p.is_parent).collect();
    let cbgs = scan.cbgs.into_iter().map(|(_, c)| c).collect();
    let ds = CityDataset::new(city_id, pois, cbgs, flows)?;
    Ok((ds, stats))
}

/// Byte-exact canonical rendering of a dataset: input schemas, records
/// sorted by id, LF line endings, shortest round-trip float formatting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalFiles {
    pub pois: String,
    pub cbgs: String,
    pub flows: String,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn render(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn canonical_csv(ds: &CityDataset) -> CanonicalFiles {
    let pois = render(
        &POI_COLUMNS,
        ds.pois().iter().map(|p| {
            vec![
                p.poi_id.clone(),
                p.location.lat().to_string(),
                p.location.lon().to_string(),
                p.category.to_string(),
                p.subcategory.clone(),
                p.total_visits.to_string(),
                p.is_parent.to_string(),
            ]
        }),
    );
    let cbgs = render(
        &CBG_COLUMNS,
        ds.cbgs().iter().map(|c| {
            vec![
                c.cbg_id.clone(),
                c.centroid.lat().to_string(),
                c.centroid.lon().to_string(),
                c.population.to_string(),
                opt(c.median_income),
                opt(c.pct_white),
                opt(c.pct_black),
                opt(c.pct_asian),
                opt(c.pct_hispanic),
            ]
        }),
    );
    let flows = render(
        &FLOW_COLUMNS,
        ds.flows()
            .iter()
            .map(|f| vec![f.cbg_id.clone(), f.poi_id.clone(), f.visits.to_string()]),
    );
    CanonicalFiles { pois, cbgs, flows }
}

/// Writes the canonical dump into `dir` and returns the written paths.
pub fn write_canonical(ds: &CityDataset, dir: &Path) -> Result<CityPaths, DatasetError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = CityPaths::in_dir(dir);
    let files = canonical_csv(ds);
    fs::write(&paths.pois, files.pois).map_err(io_err(&paths.pois))?;
    fs::write(&paths.cbgs, files.cbgs).map_err(io_err(&paths.cbgs))?;
    fs::write(&paths.flows, files.flows).map_err(io_err(&paths.flows))?;
    Ok(paths)
}
