use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::{poi_grid, Catchment, CatchmentError, CatchmentProvider, CatchmentSpec, Mode};
use crate::dataset::CityDataset;
use crate::geo::{GeoPoint, MultiPolygon, Polygon, PolygonRing, SpatialGrid};

const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IsolineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
}

/// Isoline polygons keyed by (CBG id, mode, budget).
#[derive(Debug, Clone, Default)]
pub struct IsolineSet {
    map: HashMap<(String, Mode), Vec<(f64, MultiPolygon)>>,
}

fn feature_err(index: usize, message: impl Into<String>) -> IsolineError {
    IsolineError::Feature {
        index,
        message: message.into(),
    }
}

fn parse_ring(index: usize, v: &Value) -> Result<PolygonRing, IsolineError> {
    let coords = v.as_array().ok_or_else(|| feature_err(index, "ring is not an array"))?;
    let mut pts = Vec::with_capacity(coords.len());
    for c in coords {
        let pair = c.as_array().filter(|a| a.len() >= 2);
        let (lon, lat) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
            Some((Some(lon), Some(lat))) => (lon, lat),
            _ => return Err(feature_err(index, "position must be [lon, lat]")),
        };
        pts.push(GeoPoint::new(lat, lon).map_err(|e| feature_err(index, e.to_string()))?);
    }
    PolygonRing::new(pts).map_err(|e| feature_err(index, e.to_string()))
}

fn parse_polygon(index: usize, v: &Value) -> Result<Polygon, IsolineError> {
    let rings = v
        .as_array()
        .ok_or_else(|| feature_err(index, "polygon is not an array"))?;
    let mut rings = rings.iter().map(|r| parse_ring(index, r));
    let exterior = rings
        .next()
        .ok_or_else(|| feature_err(index, "polygon has no rings"))??;
    Ok(Polygon::new(exterior, rings.collect::<Result<_, _>>()?))
}

fn parse_geometry(index: usize, g: &Value) -> Result<MultiPolygon, IsolineError> {
    let coords = &g["coordinates"];
    let polygons = match g["type"].as_str() {
        Some("Polygon") => vec![parse_polygon(index, coords)?],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| feature_err(index, "coordinates is not an array"))?
            .iter()
            .map(|p| parse_polygon(index, p))
            .collect::<Result<_, _>>()?,
        other => return Err(feature_err(index, format!("unsupported geometry type {other:?}"))),
    };
    Ok(MultiPolygon { polygons })
}

impl IsolineSet {
    /// Parses a FeatureCollection whose features carry `cbg_id`, `mode` and
    /// `budget_min` properties and a Polygon or MultiPolygon geometry.
    pub fn from_geojson(text: &str) -> Result<Self, IsolineError> {
        let root: Value = serde_json::from_str(text)?;
        let features = root["features"]
            .as_array()
            .ok_or_else(|| feature_err(0, "expected a FeatureCollection with a features array"))?;
        let mut set = IsolineSet::default();
        for (index, f) in features.iter().enumerate() {
            let props = &f["properties"];
            let cbg_id = match &props["cbg_id"] {
                Value::String(s) => s.trim().to_string(),
                Value::Number(n) => n.to_string(),
                _ => return Err(feature_err(index, "missing cbg_id")),
            };
            let mode = props["mode"]
                .as_str()
                .ok_or_else(|| feature_err(index, "missing mode"))?
                .parse::<Mode>()
                .map_err(|e| feature_err(index, e))?;
            let budget = props["budget_min"]
                .as_f64()
                .filter(|b| b.is_finite() && *b > 0.0)
                .ok_or_else(|| feature_err(index, "budget_min must be a positive number"))?;
            let shape = parse_geometry(index, &f["geometry"])?;
            set.insert(cbg_id, mode, budget, shape);
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, IsolineError> {
        let text = fs::read_to_string(path).map_err(|source| IsolineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_geojson(&text)
    }

    /// Adds an isoline, replacing any with the same key.
    pub fn insert(&mut self, cbg_id: String, mode: Mode, budget_min: f64, shape: MultiPolygon) {
        let entries = self.map.entry((cbg_id, mode)).or_default();
        entries.retain(|(b, _)| (b - budget_min).abs() > BUDGET_EPS);
        entries.push((budget_min, shape));
    }

    pub fn get(&self, cbg_id: &str, mode: Mode, budget_min: f64) -> Option<&MultiPolygon> {
        self.map
            .get(&(cbg_id.to_string(), mode))?
            .iter()
            .find(|(b, _)| (b - budget_min).abs() <= BUDGET_EPS)
            .map(|(_, s)| s)
    }

    pub fn len(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Catchments from imported isolines: a POI is reachable iff it lies in the
/// isoline (boundary included). A missing isoline is a per-CBG error.
#[derive(Debug, Clone)]
pub struct PolygonProvider {
    isolines: IsolineSet,
    grid: SpatialGrid,
}

impl PolygonProvider {
    pub fn new(isolines: IsolineSet, ds: &CityDataset, cell_deg: f64) -> Result<Self, CatchmentError> {
        Ok(Self {
            isolines,
            grid: poi_grid(ds, cell_deg)?,
        })
    }
}

impl CatchmentProvider for PolygonProvider {
    fn name(&self) -> &'static str {
        "polygons"
    }

    fn catchment(&self, ds: &CityDataset, cbg: usize, spec: CatchmentSpec) -> Result<Catchment, CatchmentError> {
        let id = &ds.cbg(cbg).cbg_id;
        let shape =
            self.isolines
                .get(id, spec.mode, spec.budget_min)
                .ok_or_else(|| CatchmentError::MissingIsoline {
                    cbg_id: id.clone(),
                    mode: spec.mode,
                    budget_min: spec.budget_min,
                })?;
        Ok(Catchment::new(ds, cbg, spec, self.grid.query_region(shape)))
    }
}
