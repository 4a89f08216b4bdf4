use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{Catchment, CatchmentError, CatchmentProvider, CatchmentSpec, Mode, ModeSpeeds};
use crate::dataset::CityDataset;
use crate::geo::{GeoPoint, SpatialGrid};

/// Default maximum distance between a CBG centroid or POI and its network node.
pub const DEFAULT_MAX_SNAP_M: f64 = 500.0;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(u64),
    #[error("edge {from} -> {to} references an unknown node")]
    UnknownNode { from: u64, to: u64 },
    #[error("edge {from} -> {to}: {message}")]
    BadEdge { from: u64, to: u64, message: String },
}

/// A directed edge as read from `edges.csv`. `speeds_kmh[m]` is `Some` iff
/// mode `m` (indexed as [`Mode::ALL`]) may traverse the edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub from: u64,
    pub to: u64,
    pub length_m: f64,
    pub speeds_kmh: [Option<f64>; 4],
}

#[derive(Debug, Clone, PartialEq)]
struct Edge {
    to: usize,
    length_m: f64,
    speeds_kmh: [Option<f64>; 4],
}

/// Directed road network. Nodes are stored ascending by id, so node indices
/// order the same way as ids.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    ids: Vec<u64>,
    locations: Vec<GeoPoint>,
    index: HashMap<u64, usize>,
    adjacency: Vec<Vec<Edge>>,
    routable: [bool; 4],
}

impl RoadNetwork {
    pub fn new(mut nodes: Vec<(u64, GeoPoint)>, edges: Vec<EdgeRecord>) -> Result<Self, NetworkError> {
        nodes.sort_by_key(|(id, _)| *id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, (id, _)) in nodes.iter().enumerate() {
            if index.insert(*id, i).is_some() {
                return Err(NetworkError::DuplicateNode(*id));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut routable = [false; 4];
        for e in edges {
            let (Some(&from), Some(&to)) = (index.get(&e.from), index.get(&e.to)) else {
                return Err(NetworkError::UnknownNode { from: e.from, to: e.to });
            };
            if !(e.length_m.is_finite() && e.length_m >= 0.0) {
                return Err(NetworkError::BadEdge {
                    from: e.from,
                    to: e.to,
                    message: format!("invalid length {}", e.length_m),
                });
            }
            for (m, speed) in e.speeds_kmh.iter().enumerate() {
                if let Some(v) = speed {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(NetworkError::BadEdge {
                            from: e.from,
                            to: e.to,
                            message: format!("speed for {} must be positive, got {v}", Mode::ALL[m]),
                        });
                    }
                    routable[m] = true;
                }
            }
            adjacency[from].push(Edge {
                to,
                length_m: e.length_m,
                speeds_kmh: e.speeds_kmh,
            });
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|e| e.to);
        }
        Ok(Self {
            ids: nodes.iter().map(|(id, _)| *id).collect(),
            locations: nodes.into_iter().map(|(_, p)| p).collect(),
            index,
            adjacency,
            routable,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn node_id(&self, idx: usize) -> u64 {
        self.ids[idx]
    }

    pub fn node_idx(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn location(&self, idx: usize) -> GeoPoint {
        self.locations[idx]
    }

    pub fn is_routable(&self, mode: Mode) -> bool {
        self.routable[mode as usize]
    }

    /// Outgoing edges of node `idx` as `(to, minutes)` for `mode`.
    pub fn edges_for(&self, idx: usize, mode: Mode) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adjacency[idx]
            .iter()
            .filter_map(move |e| e.speeds_kmh[mode as usize].map(|v| (e.to, e.length_m / 1000.0 / v * 60.0)))
    }

    /// Every directed edge in node order, as read.
    pub fn edge_records(&self) -> Vec<EdgeRecord> {
        let mut out = Vec::new();
        for (from, adj) in self.adjacency.iter().enumerate() {
            for e in adj {
                out.push(EdgeRecord {
                    from: self.ids[from],
                    to: self.ids[e.to],
                    length_m: e.length_m,
                    speeds_kmh: e.speeds_kmh,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Minutes(f64);

impl Eq for Minutes {}

impl PartialOrd for Minutes {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Minutes {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Least travel time from `origin` to every node reachable within
/// `budget_min`, as `(node index, minutes)` ascending by node index. Equal
/// tentative times are settled in ascending node-id order.
pub fn isochrone(net: &RoadNetwork, origin: usize, mode: Mode, budget_min: f64) -> Vec<(usize, f64)> {
    let n = net.node_count();
    let mut best = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    if origin >= n || budget_min.is_nan() || budget_min < 0.0 {
        return Vec::new();
    }
    best[origin] = 0.0;
    heap.push(Reverse((Minutes(0.0), net.ids[origin], origin)));
    while let Some(Reverse((Minutes(t), _, u))) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for (v, dt) in net.edges_for(u, mode) {
            let cand = t + dt;
            if cand <= budget_min && cand < best[v] {
                best[v] = cand;
                heap.push(Reverse((Minutes(cand), net.ids[v], v)));
            }
        }
    }
    best.iter()
        .enumerate()
        .filter(|(_, t)| t.is_finite())
        .map(|(i, t)| (i, *t))
        .collect()
}

fn parse_err(file: &Path, line: u64, message: impl Into<String>) -> NetworkError {
    NetworkError::Parse {
        file: file.display().to_string(),
        line,
        message: message.into(),
    }
}

// (line number, column -> value)
type Row = (u64, HashMap<String, String>);

fn read_rows(path: &Path, required: &[&str]) -> Result<Vec<Row>, NetworkError> {
    let bytes = fs::read(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(parse_err(path, 1, format!("missing column '{col}'")));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        rows.push((line, row));
    }
    Ok(rows)
}

/// Reads `nodes.csv` (`node_id,lat,lon`) and `edges.csv`
/// (`from,to,length_m,modes,speed_walk,speed_cycle,speed_transit,speed_car`).
/// `modes` lists the allowed modes as letters from `wbtc`.
pub fn load_network(nodes_path: &Path, edges_path: &Path) -> Result<RoadNetwork, NetworkError> {
    let mut nodes = Vec::new();
    for (line, row) in read_rows(nodes_path, &["node_id", "lat", "lon"])? {
        let id = row["node_id"]
            .parse::<u64>()
            .map_err(|_| parse_err(nodes_path, line, format!("bad node_id '{}'", row["node_id"])))?;
        let lat = row["lat"]
            .parse::<f64>()
            .map_err(|_| parse_err(nodes_path, line, "bad lat"))?;
        let lon = row["lon"]
            .parse::<f64>()
            .map_err(|_| parse_err(nodes_path, line, "bad lon"))?;
        let p = GeoPoint::new(lat, lon).map_err(|e| parse_err(nodes_path, line, e.to_string()))?;
        nodes.push((id, p));
    }
    let speed_cols = ["speed_walk", "speed_cycle", "speed_transit", "speed_car"];
    let mut required = vec!["from", "to", "length_m", "modes"];
    required.extend(speed_cols);
    let mut edges = Vec::new();
    for (line, row) in read_rows(edges_path, &required)? {
        let id = |col: &str| {
            row[col]
                .parse::<u64>()
                .map_err(|_| parse_err(edges_path, line, format!("bad {col} '{}'", row[col])))
        };
        let (from, to) = (id("from")?, id("to")?);
        let length_m = row["length_m"]
            .parse::<f64>()
            .map_err(|_| parse_err(edges_path, line, "bad length_m"))?;
        let mut speeds_kmh = [None; 4];
        for c in row["modes"].chars() {
            let mode =
                Mode::from_code(c).ok_or_else(|| parse_err(edges_path, line, format!("unknown mode letter '{c}'")))?;
            let col = speed_cols[mode as usize];
            let v = row[col]
                .parse::<f64>()
                .map_err(|_| parse_err(edges_path, line, format!("{col} required for allowed mode")))?;
            speeds_kmh[mode as usize] = Some(v);
        }
        edges.push(EdgeRecord {
            from,
            to,
            length_m,
            speeds_kmh,
        });
    }
    RoadNetwork::new(nodes, edges)
}

/// Network catchments. The CBG centroid and every POI are snapped to their
/// nearest node (ties to the smaller node id) within `max_snap_m`; snap legs
/// are walked for walk, cycle and transit and driven for car. A POI is
/// reachable iff origin leg + network time + POI leg ≤ budget.
#[derive(Debug, Clone)]
pub struct NetworkProvider {
    net: RoadNetwork,
    speeds: ModeSpeeds,
    max_snap_km: f64,
    node_grid: SpatialGrid,
    // POIs attached to each node, with their snap distance in km
    attached: Vec<Vec<(usize, f64)>>,
}

impl NetworkProvider {
    pub fn new(
        net: RoadNetwork,
        ds: &CityDataset,
        speeds: ModeSpeeds,
        max_snap_m: f64,
    ) -> Result<Self, CatchmentError> {
        speeds.validate()?;
        let max_snap_km = max_snap_m / 1000.0;
        let cell = (max_snap_km / 111.0).max(1e-4);
        let node_grid = SpatialGrid::build((0..net.node_count()).map(|i| (i, net.location(i))), cell)?;
        let mut attached = vec![Vec::new(); net.node_count()];
        for (i, poi) in ds.pois().iter().enumerate() {
            if let Some((node, d)) = node_grid.nearest(poi.location, max_snap_km) {
                attached[node].push((i, d));
            }
        }
        Ok(Self {
            net,
            speeds,
            max_snap_km,
            node_grid,
            attached,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    fn snap_speed(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Car => self.speeds.car,
            Mode::Walk | Mode::Cycle | Mode::Transit => self.speeds.walk,
        }
    }
}

impl CatchmentProvider for NetworkProvider {
    fn name(&self) -> &'static str {
        "network"
    }

    fn catchment(&self, ds: &CityDataset, cbg: usize, spec: CatchmentSpec) -> Result<Catchment, CatchmentError> {
        if !self.net.is_routable(spec.mode) {
            return Err(CatchmentError::ModeNotRouted(spec.mode));
        }
        let centroid = ds.cbg(cbg).centroid;
        let Some((origin, origin_km)) = self.node_grid.nearest(centroid, self.max_snap_km) else {
            let mut c = Catchment::new(ds, cbg, spec, Vec::new());
            c.warnings.push(format!(
                "CBG '{}' is farther than {} m from the network; catchment left empty",
                ds.cbg(cbg).cbg_id,
                self.max_snap_km * 1000.0
            ));
            return Ok(c);
        };
        let leg_speed = self.snap_speed(spec.mode);
        let origin_leg = origin_km / leg_speed * 60.0;
        let mut reachable = Vec::new();
        if origin_leg <= spec.budget_min {
            for (node, t) in isochrone(&self.net, origin, spec.mode, spec.budget_min - origin_leg) {
                for &(poi, poi_km) in &self.attached[node] {
                    if origin_leg + t + poi_km / leg_speed * 60.0 <= spec.budget_min {
                        reachable.push(poi);
                    }
                }
            }
        }
        Ok(Catchment::new(ds, cbg, spec, reachable))
    }
}
