//! Travel-time catchments: which POIs a CBG reaches within a time budget by
//! a given mode.
//!
//! Three providers implement [`CatchmentProvider`]:
//! [`FixedSpeedProvider`] (straight-line radius at a per-mode speed),
//! [`NetworkProvider`] (budget-limited least-time search on a road network)
//! and [`PolygonProvider`] (containment in externally supplied isolines).

mod isolines;
mod network;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::CityDataset;
use crate::geo::{haversine_km, GeoError, GeoPoint, SpatialGrid};

pub use isolines::{IsolineError, IsolineSet, PolygonProvider};
pub use network::{
    isochrone, load_network, EdgeRecord, NetworkError, NetworkProvider, RoadNetwork, DEFAULT_MAX_SNAP_M,
};

/// Default grid cell used to index POIs, in degrees (about 1 km).
pub const DEFAULT_CELL_DEG: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Walk,
    Cycle,
    Transit,
    Car,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Walk, Mode::Cycle, Mode::Transit, Mode::Car];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Walk => "walk",
            Mode::Cycle => "cycle",
            Mode::Transit => "transit",
            Mode::Car => "car",
        }
    }

    /// Single-letter code used in the `modes` column of `edges.csv`.
    pub fn code(&self) -> char {
        match self {
            Mode::Walk => 'w',
            Mode::Cycle => 'b',
            Mode::Transit => 't',
            Mode::Car => 'c',
        }
    }

    pub fn from_code(c: char) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.code() == c.to_ascii_lowercase())
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" | "walking" | "pedestrian" => Ok(Mode::Walk),
            "cycle" | "cycling" | "bike" | "bicycle" => Ok(Mode::Cycle),
            "transit" | "public_transit" | "pt" => Ok(Mode::Transit),
            "car" | "drive" | "driving" => Ok(Mode::Car),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// Travel speeds in km/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSpeeds {
    pub walk: f64,
    pub cycle: f64,
    pub transit: f64,
    pub car: f64,
}

impl Default for ModeSpeeds {
    fn default() -> Self {
        Self {
            walk: 5.0,
            cycle: 15.0,
            transit: 20.0,
            car: 40.0,
        }
    }
}

impl ModeSpeeds {
    pub fn get(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Walk => self.walk,
            Mode::Cycle => self.cycle,
            Mode::Transit => self.transit,
            Mode::Car => self.car,
        }
    }

    pub fn validate(&self) -> Result<(), CatchmentError> {
        for mode in Mode::ALL {
            let v = self.get(mode);
            if !(v.is_finite() && v > 0.0) {
                return Err(CatchmentError::Speed { mode, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatchmentSpec {
    pub mode: Mode,
    pub budget_min: f64,
}

impl CatchmentSpec {
    pub fn new(mode: Mode, budget_min: f64) -> Result<Self, CatchmentError> {
        if !(budget_min.is_finite() && budget_min > 0.0) {
            return Err(CatchmentError::Budget(budget_min));
        }
        Ok(Self { mode, budget_min })
    }

    pub fn fifteen_minutes(mode: Mode) -> Self {
        Self { mode, budget_min: 15.0 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatchmentError {
    #[error("budget must be positive and finite, got {0}")]
    Budget(f64),
    #[error("speed for {mode} must be positive and finite, got {value}")]
    Speed { mode: Mode, value: f64 },
    #[error("no isoline for CBG '{cbg_id}', mode {mode}, budget {budget_min} min")]
    MissingIsoline {
        cbg_id: String,
        mode: Mode,
        budget_min: f64,
    },
    #[error("mode {0} is not allowed on any network edge")]
    ModeNotRouted(Mode),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// The POIs one CBG reaches under one [`CatchmentSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Catchment {
    pub cbg: usize,
    pub spec: CatchmentSpec,
    origin: GeoPoint,
    reachable: Vec<usize>,
    route_km: Option<HashMap<usize, f64>>,
    pub warnings: Vec<String>,
}

impl Catchment {
    /// `reachable` holds POI indices of `ds`; it is sorted and deduplicated here.
    pub fn new(ds: &CityDataset, cbg: usize, spec: CatchmentSpec, mut reachable: Vec<usize>) -> Self {
        reachable.sort_unstable();
        reachable.dedup();
        Self {
            cbg,
            spec,
            origin: ds.cbg(cbg).centroid,
            reachable,
            route_km: None,
            warnings: Vec::new(),
        }
    }

    /// Replaces straight-line distances with provider-supplied route
    /// distances for the listed POIs.
    pub fn with_route_distances(mut self, km: HashMap<usize, f64>) -> Self {
        self.route_km = Some(km);
        self
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    /// Reachable POI indices, ascending (equivalently, ascending by id).
    pub fn reachable(&self) -> &[usize] {
        &self.reachable
    }

    pub fn len(&self) -> usize {
        self.reachable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reachable.is_empty()
    }

    pub fn is_reachable(&self, poi: usize) -> bool {
        self.reachable.binary_search(&poi).is_ok()
    }

    /// Distance from the CBG centroid to any POI, reachable or not.
    pub fn dist_km(&self, ds: &CityDataset, poi: usize) -> f64 {
        if let Some(d) = self.route_km.as_ref().and_then(|m| m.get(&poi)) {
            return *d;
        }
        haversine_km(self.origin, ds.poi(poi).location)
    }
}

/// A source of catchments. Implementations are immutable and shareable
/// across worker threads; they are bound to the dataset they were built
/// for.
pub trait CatchmentProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn catchment(&self, ds: &CityDataset, cbg: usize, spec: CatchmentSpec) -> Result<Catchment, CatchmentError>;
}

pub(crate) fn poi_grid(ds: &CityDataset, cell_deg: f64) -> Result<SpatialGrid, GeoError> {
    SpatialGrid::build(ds.pois().iter().enumerate().map(|(i, p)| (i, p.location)), cell_deg)
}

/// Straight-line catchments: a POI is reachable iff its great-circle
/// distance is at most `speed × budget`.
#[derive(Debug, Clone)]
pub struct FixedSpeedProvider {
    speeds: ModeSpeeds,
    grid: SpatialGrid,
}

impl FixedSpeedProvider {
    pub fn new(ds: &CityDataset, speeds: ModeSpeeds, cell_deg: f64) -> Result<Self, CatchmentError> {
        speeds.validate()?;
        Ok(Self {
            speeds,
            grid: poi_grid(ds, cell_deg)?,
        })
    }

    pub fn speeds(&self) -> &ModeSpeeds {
        &self.speeds
    }

    pub fn radius_km(&self, spec: CatchmentSpec) -> f64 {
        self.speeds.get(spec.mode) * spec.budget_min / 60.0
    }
}

impl CatchmentProvider for FixedSpeedProvider {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn catchment(&self, ds: &CityDataset, cbg: usize, spec: CatchmentSpec) -> Result<Catchment, CatchmentError> {
        let centroid = ds.cbg(cbg).centroid;
        let reachable = self.grid.query_radius(centroid, self.radius_km(spec));
        Ok(Catchment::new(ds, cbg, spec, reachable))
    }
}
