//! Geospatial primitives: great-circle distance, planar polygon membership and
//! a uniform-grid point index with exact-filter semantics.
//!
//! Polygons are evaluated in planar lat/lon space. That is adequate for
//! city-scale isolines; polygons crossing the antimeridian are not supported.

use std::collections::HashMap;

use thiserror::Error;

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90] or not finite")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180] or not finite")]
    Longitude(f64),
    #[error("ring needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("ring has identical consecutive vertices at position {0}")]
    RepeatedVertex(usize),
    #[error("grid cell size must be positive and finite, got {0}")]
    CellSize(f64),
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Point reached by travelling `dist_km` along the great circle leaving
    /// `self` at `bearing_deg` (clockwise from north). Longitude is wrapped
    /// into [-180, 180].
    pub fn destination(&self, bearing_deg: f64, dist_km: f64) -> GeoPoint {
        let delta = dist_km / EARTH_RADIUS_KM;
        let theta = bearing_deg.to_radians();
        let phi1 = self.lat.to_radians();
        let lambda1 = self.lon.to_radians();
        let sin_phi2 = phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos();
        let phi2 = sin_phi2.clamp(-1.0, 1.0).asin();
        let lambda2 = lambda1 + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);
        let mut lon = lambda2.to_degrees();
        while lon > 180.0 {
            lon -= 360.0;
        }
        while lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint {
            lat: phi2.to_degrees().clamp(-90.0, 90.0),
            lon,
        }
    }
}

/// Great-circle distance in kilometres on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let half_dphi = (b.lat - a.lat).to_radians() / 2.0;
    let half_dlambda = (b.lon - a.lon).to_radians() / 2.0;
    let h = half_dphi.sin().powi(2) + phi1.cos() * phi2.cos() * half_dlambda.sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Axis-aligned box in degrees; bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    fn around(points: &[GeoPoint]) -> Self {
        let mut bbox = BoundingBox {
            min_lat: f64::INFINITY,
            min_lon: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            max_lon: f64::NEG_INFINITY,
        };
        for p in points {
            bbox.min_lat = bbox.min_lat.min(p.lat);
            bbox.max_lat = bbox.max_lat.max(p.lat);
            bbox.min_lon = bbox.min_lon.min(p.lon);
            bbox.max_lon = bbox.max_lon.max(p.lon);
        }
        bbox
    }

    fn union(self, other: BoundingBox) -> Self {
        BoundingBox {
            min_lat: self.min_lat.min(other.min_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lat: self.max_lat.max(other.max_lat),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }
}

/// Where a point lies relative to a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingLocation {
    Inside,
    Boundary,
    Outside,
}

/// A simple closed ring. The closing edge from the last vertex back to the
/// first is implicit; an explicit closing vertex (as in GeoJSON) is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRing {
    vertices: Vec<GeoPoint>,
    bbox: BoundingBox,
}

impl PolygonRing {
    pub fn new(mut vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeoError::TooFewVertices(vertices.len()));
        }
        for i in 0..vertices.len() {
            let next = (i + 1) % vertices.len();
            if vertices[i] == vertices[next] {
                return Err(GeoError::RepeatedVertex(next));
            }
        }
        let bbox = BoundingBox::around(&vertices);
        Ok(Self { vertices, bbox })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    /// Even-odd ray crossing in planar (lon, lat) space, with an explicit
    /// on-edge check first.
    pub fn locate(&self, p: GeoPoint) -> RingLocation {
        if !self.bbox.contains(p) {
            return RingLocation::Outside;
        }
        let (px, py) = (p.lon, p.lat);
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = (self.vertices[i].lon, self.vertices[i].lat);
            let (xj, yj) = (self.vertices[j].lon, self.vertices[j].lat);
            if on_segment(px, py, xj, yj, xi, yi) {
                return RingLocation::Boundary;
            }
            if (yi > py) != (yj > py) {
                let x_cross = (xj - xi) * (py - yi) / (yj - yi) + xi;
                if px < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        if inside {
            RingLocation::Inside
        } else {
            RingLocation::Outside
        }
    }
}

fn on_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    if px < ax.min(bx) || px > ax.max(bx) || py < ay.min(by) || py > ay.max(by) {
        return false;
    }
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    let scale = (bx - ax).abs().max((by - ay).abs());
    cross.abs() <= 1e-12 * scale.max(1e-300)
}

/// Boundary-inclusive point-in-polygon test.
pub fn point_in_polygon(p: GeoPoint, ring: &PolygonRing) -> bool {
    ring.locate(p) != RingLocation::Outside
}

/// A polygon with optional holes. Hole boundaries belong to the polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: PolygonRing,
    pub holes: Vec<PolygonRing>,
}

impl Polygon {
    pub fn new(exterior: PolygonRing, holes: Vec<PolygonRing>) -> Self {
        Self { exterior, holes }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        point_in_polygon(p, &self.exterior) && self.holes.iter().all(|h| h.locate(p) != RingLocation::Inside)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPolygon {
    pub polygons: Vec<Polygon>,
}

/// Anything the grid can answer a containment query for.
pub trait Region {
    fn bbox(&self) -> Option<BoundingBox>;
    fn contains(&self, p: GeoPoint) -> bool;
}

impl Region for PolygonRing {
    fn bbox(&self) -> Option<BoundingBox> {
        Some(self.bbox)
    }
    fn contains(&self, p: GeoPoint) -> bool {
        point_in_polygon(p, self)
    }
}

impl Region for Polygon {
    fn bbox(&self) -> Option<BoundingBox> {
        Some(self.exterior.bbox)
    }
    fn contains(&self, p: GeoPoint) -> bool {
        Polygon::contains(self, p)
    }
}

impl Region for MultiPolygon {
    fn bbox(&self) -> Option<BoundingBox> {
        self.polygons.iter().map(|p| p.exterior.bbox).reduce(BoundingBox::union)
    }
    fn contains(&self, p: GeoPoint) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// Uniform lat/lon grid over a fixed point set. Every query first collects
/// the candidate cells and then filters each candidate exactly, so results
/// always equal a linear scan.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell_size: f64,
    entries: Vec<(usize, GeoPoint)>,
    // Entries are stored grouped by cell; each cell maps to its slot range.
    cells: HashMap<(i64, i64), (u32, u32)>,
}

impl SpatialGrid {
    pub fn build(points: impl IntoIterator<Item = (usize, GeoPoint)>, cell_size: f64) -> Result<Self, GeoError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GeoError::CellSize(cell_size));
        }
        let key = |p: &GeoPoint| (cell_coord(p.lat, cell_size), cell_coord(p.lon, cell_size));
        let mut entries: Vec<(usize, GeoPoint)> = points.into_iter().collect();
        entries.sort_by_key(|(_, p)| key(p));
        let mut cells: HashMap<(i64, i64), (u32, u32)> = HashMap::new();
        for (slot, (_, p)) in entries.iter().enumerate() {
            cells.entry(key(p)).or_insert((slot as u32, slot as u32)).1 = slot as u32 + 1;
        }
        Ok(Self {
            cell_size,
            entries,
            cells,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Ids within `radius_km` (inclusive) of `center`, ascending.
    pub fn query_radius(&self, center: GeoPoint, radius_km: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.entries.is_empty() || radius_km.is_nan() || radius_km < 0.0 {
            return out;
        }
        let bounds = radius_window(center, radius_km);
        let wraps = bounds.lon == (-180.0, 180.0);
        // Cells whose farthest corner is inside the radius (with a margin for
        // rounding) are taken whole; the rest are filtered point by point.
        let inner_km = radius_km - 1e-9;
        self.scan_window(&self.window_for(&bounds), |cell, slots| {
            if !wraps && inner_km > 0.0 && self.cell_within(center, cell, inner_km) {
                out.extend(slots.iter().map(|(id, _)| *id));
            } else {
                out.extend(
                    slots
                        .iter()
                        .filter(|(_, p)| haversine_km(center, *p) <= radius_km)
                        .map(|(id, _)| *id),
                );
            }
        });
        out.sort_unstable();
        out
    }

    // Over a lat/lon box, great-circle distance from a point peaks at a corner
    // as long as the box spans less than 180 degrees of longitude offset.
    fn cell_within(&self, center: GeoPoint, (row, col): (i64, i64), km: f64) -> bool {
        let cs = self.cell_size;
        let (lat0, lon0) = (row as f64 * cs, col as f64 * cs);
        let (lat1, lon1) = (lat0 + cs, lon0 + cs);
        if lat0 < -90.0 || lat1 > 90.0 || (lon0 - center.lon).abs() > 180.0 || (lon1 - center.lon).abs() > 180.0 {
            return false;
        }
        [(lat0, lon0), (lat0, lon1), (lat1, lon0), (lat1, lon1)]
            .into_iter()
            .all(|(lat, lon)| haversine_km(center, GeoPoint { lat, lon }) <= km)
    }

    /// Visits every `(id, distance_km)` within `radius_km` of `center`, in
    /// unspecified order.
    pub fn for_each_within(&self, center: GeoPoint, radius_km: f64, mut f: impl FnMut(usize, f64)) {
        if self.entries.is_empty() || radius_km.is_nan() || radius_km < 0.0 {
            return;
        }
        let window = self.window_for(&radius_window(center, radius_km));
        self.scan_window(&window, |_, slots| {
            for &(id, p) in slots {
                let d = haversine_km(center, p);
                if d <= radius_km {
                    f(id, d);
                }
            }
        });
    }

    /// Nearest indexed point within `max_km`; ties go to the smaller id.
    pub fn nearest(&self, center: GeoPoint, max_km: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.for_each_within(center, max_km, |id, d| {
            let better = match best {
                None => true,
                Some((bid, bd)) => d < bd || (d == bd && id < bid),
            };
            if better {
                best = Some((id, d));
            }
        });
        best
    }

    /// Ids whose point lies in `region`, ascending.
    pub fn query_region<R: Region + ?Sized>(&self, region: &R) -> Vec<usize> {
        self.query_region_counted(region).0
    }

    /// Like [`query_region`](Self::query_region), also returning how many
    /// exact containment tests the bounding-box prefilter let through.
    pub fn query_region_counted<R: Region + ?Sized>(&self, region: &R) -> (Vec<usize>, usize) {
        let mut out = Vec::new();
        let mut tests = 0usize;
        let Some(bbox) = region.bbox() else {
            return (out, tests);
        };
        let window = Window {
            rows: (
                cell_coord(bbox.min_lat, self.cell_size),
                cell_coord(bbox.max_lat, self.cell_size),
            ),
            cols: vec![(
                cell_coord(bbox.min_lon, self.cell_size),
                cell_coord(bbox.max_lon, self.cell_size),
            )],
        };
        self.scan_window(&window, |_, slots| {
            for &(id, p) in slots {
                if bbox.contains(p) {
                    tests += 1;
                    if region.contains(p) {
                        out.push(id);
                    }
                }
            }
        });
        out.sort_unstable();
        (out, tests)
    }

    fn scan_window(&self, window: &Window, mut visit: impl FnMut((i64, i64), &[(usize, GeoPoint)])) {
        let (r0, r1) = window.rows;
        let window_cells: i128 = window
            .cols
            .iter()
            .map(|(c0, c1)| (*c1 as i128 - *c0 as i128 + 1) * (r1 as i128 - r0 as i128 + 1))
            .sum();
        if window_cells > self.cells.len() as i128 {
            // Iterate in key order so visiting order is deterministic.
            let mut keys: Vec<(i64, i64)> = self
                .cells
                .keys()
                .copied()
                .filter(|(r, c)| window.contains(*r, *c))
                .collect();
            keys.sort_unstable();
            for key in keys {
                let (a, b) = self.cells[&key];
                visit(key, &self.entries[a as usize..b as usize]);
            }
        } else {
            for &(c0, c1) in &window.cols {
                for row in r0..=r1 {
                    for col in c0..=c1 {
                        if let Some(&(a, b)) = self.cells.get(&(row, col)) {
                            visit((row, col), &self.entries[a as usize..b as usize]);
                        }
                    }
                }
            }
        }
    }
}

fn cell_coord(deg: f64, cell_size: f64) -> i64 {
    (deg / cell_size).floor() as i64
}

struct Window {
    rows: (i64, i64),
    cols: Vec<(i64, i64)>,
}

impl Window {
    fn contains(&self, row: i64, col: i64) -> bool {
        row >= self.rows.0 && row <= self.rows.1 && self.cols.iter().any(|(c0, c1)| col >= *c0 && col <= *c1)
    }
}

// Degree window guaranteed to cover the spherical cap of `radius_km`.
fn radius_window(center: GeoPoint, radius_km: f64) -> WindowDeg {
    let delta = radius_km / EARTH_RADIUS_KM;
    let pad = 1e-9;
    let delta_deg = delta.to_degrees() * (1.0 + 1e-9) + pad;
    let lat_lo = center.lat - delta_deg;
    let lat_hi = center.lat + delta_deg;
    let phi = center.lat.to_radians();
    let full = lat_lo <= -90.0 || lat_hi >= 90.0 || delta >= std::f64::consts::FRAC_PI_2 || delta.sin() >= phi.cos();
    let lons = if full {
        (-180.0, 180.0)
    } else {
        let dlon = (delta.sin() / phi.cos()).asin().to_degrees() * (1.0 + 1e-9) + pad;
        let (lo, hi) = (center.lon - dlon, center.lon + dlon);
        if lo < -180.0 || hi > 180.0 {
            (-180.0, 180.0)
        } else {
            (lo, hi)
        }
    };
    WindowDeg {
        lat: (lat_lo.max(-90.0), lat_hi.min(90.0)),
        lon: lons,
    }
}

struct WindowDeg {
    lat: (f64, f64),
    lon: (f64, f64),
}

impl SpatialGrid {
    fn window_for(&self, w: &WindowDeg) -> Window {
        Window {
            rows: (cell_coord(w.lat.0, self.cell_size), cell_coord(w.lat.1, self.cell_size)),
            cols: vec![(cell_coord(w.lon.0, self.cell_size), cell_coord(w.lon.1, self.cell_size))],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn unit_square() -> PolygonRing {
        PolygonRing::new(vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0), pt(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(matches!(GeoPoint::new(91.0, 0.0), Err(GeoError::Latitude(_))));
        assert!(matches!(GeoPoint::new(0.0, -180.5), Err(GeoError::Longitude(_))));
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(GeoPoint::new(90.0, 180.0).is_ok());
    }

    #[test]
    fn haversine_identity_and_one_degree() {
        let a = pt(40.7, -74.0);
        assert_eq!(haversine_km(a, a), 0.0);
        let one_degree = std::f64::consts::PI / 180.0 * EARTH_RADIUS_KM;
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 1.0));
        assert!((d - one_degree).abs() < 1e-9);
        assert!((d - 111.1949).abs() < 1e-3);
    }

    #[test]
    fn haversine_antipodal_is_half_circumference() {
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
    }

    #[test]
    fn destination_round_trips_distance() {
        let o = pt(41.88, -87.63);
        for bearing in [0.0, 45.0, 133.0, 270.0] {
            let q = o.destination(bearing, 2.5);
            assert!((haversine_km(o, q) - 2.5).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_square_membership() {
        let sq = unit_square();
        assert!(point_in_polygon(pt(0.5, 0.5), &sq));
        assert!(!point_in_polygon(pt(1.5, 0.5), &sq));
        // edges and corners count as inside
        assert!(point_in_polygon(pt(1.0, 0.5), &sq));
        assert!(point_in_polygon(pt(0.0, 0.0), &sq));
        assert_eq!(sq.locate(pt(0.0, 0.3)), RingLocation::Boundary);
    }

    #[test]
    fn concave_notch_is_outside() {
        // U shape opening north: notch spans lon 1..2 above lat 1.
        let u = PolygonRing::new(vec![
            pt(0.0, 0.0),
            pt(0.0, 3.0),
            pt(3.0, 3.0),
            pt(3.0, 2.0),
            pt(1.0, 2.0),
            pt(1.0, 1.0),
            pt(3.0, 1.0),
            pt(3.0, 0.0),
        ])
        .unwrap();
        assert!(!point_in_polygon(pt(2.0, 1.5), &u));
        assert!(point_in_polygon(pt(2.0, 0.5), &u));
        assert!(point_in_polygon(pt(0.5, 1.5), &u));
    }

    #[test]
    fn ring_construction_errors() {
        assert_eq!(
            PolygonRing::new(vec![pt(0.0, 0.0), pt(1.0, 1.0)]).unwrap_err(),
            GeoError::TooFewVertices(2)
        );
        // explicit closure is accepted and dropped
        let closed = PolygonRing::new(vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0), pt(0.0, 0.0)]).unwrap();
        assert_eq!(closed.vertices().len(), 3);
        assert_eq!(
            PolygonRing::new(vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(0.0, 1.0), pt(1.0, 1.0)]).unwrap_err(),
            GeoError::RepeatedVertex(2)
        );
    }

    #[test]
    fn hole_interior_excluded_boundary_kept() {
        let outer = PolygonRing::new(vec![pt(0.0, 0.0), pt(0.0, 4.0), pt(4.0, 4.0), pt(4.0, 0.0)]).unwrap();
        let hole = PolygonRing::new(vec![pt(1.0, 1.0), pt(1.0, 2.0), pt(2.0, 2.0), pt(2.0, 1.0)]).unwrap();
        let poly = Polygon::new(outer, vec![hole]);
        assert!(!poly.contains(pt(1.5, 1.5)));
        assert!(poly.contains(pt(1.0, 1.5)));
        assert!(poly.contains(pt(3.0, 3.0)));
    }

    #[test]
    fn empty_grid_answers_nothing() {
        let grid = SpatialGrid::build(Vec::new(), 0.01).unwrap();
        assert!(grid.is_empty());
        assert!(grid.query_radius(pt(0.0, 0.0), 1000.0).is_empty());
        assert!(grid.query_region(&unit_square()).is_empty());
        assert!(grid.nearest(pt(0.0, 0.0), 1e6).is_none());
    }

    #[test]
    fn zero_radius_hits_only_coincident_points() {
        let grid = SpatialGrid::build(vec![(7, pt(1.0, 1.0)), (8, pt(1.0, 1.0001))], 0.01).unwrap();
        assert_eq!(grid.query_radius(pt(1.0, 1.0), 0.0), vec![7]);
        assert!(grid.query_radius(pt(2.0, 2.0), 0.0).is_empty());
    }

    #[test]
    fn rejects_bad_cell_size() {
        assert!(SpatialGrid::build(Vec::new(), 0.0).is_err());
        assert!(SpatialGrid::build(Vec::new(), f64::NAN).is_err());
    }

    #[test]
    fn window_near_pole_and_antimeridian_stays_exact() {
        let pts = vec![
            (0, pt(89.9, 10.0)),
            (1, pt(89.9, -170.0)),
            (2, pt(0.0, 179.99)),
            (3, pt(0.0, -179.99)),
        ];
        let grid = SpatialGrid::build(pts.clone(), 0.5).unwrap();
        let r = grid.query_radius(pt(89.95, 100.0), 50.0);
        assert_eq!(r, vec![0, 1]);
        let r = grid.query_radius(pt(0.0, 180.0), 5.0);
        assert_eq!(r, vec![2, 3]);
    }

    proptest::proptest! {
        #[test]
        fn radius_query_equals_linear_filter(
            lat in -89.0f64..89.0,
            lon in -180.0f64..180.0,
            spread in 0.001f64..0.5,
            cell in 0.001f64..0.3,
            radius in 0.0f64..40.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<(usize, GeoPoint)> = (0..400)
                .map(|i| {
                    let la = (lat + r.gen_range(-spread..spread)).clamp(-90.0, 90.0);
                    let mut lo = lon + r.gen_range(-spread..spread);
                    if lo > 180.0 { lo -= 360.0 } else if lo < -180.0 { lo += 360.0 }
                    (i, pt(la, lo))
                })
                .collect();
            let grid = SpatialGrid::build(pts.clone(), cell).unwrap();
            let center = pts[0].1;
            let expected: Vec<usize> =
                pts.iter().filter(|(_, p)| haversine_km(center, *p) <= radius).map(|(i, _)| *i).collect();
            proptest::prop_assert_eq!(grid.query_radius(center, radius), expected);
        }
    }

    #[test]
    fn bbox_prefilter_skips_exact_tests() {
        let grid = SpatialGrid::build(vec![(0, pt(5.0, 5.0)), (1, pt(0.5, 0.5))], 0.25).unwrap();
        let (ids, tests) = grid.query_region_counted(&unit_square());
        assert_eq!(ids, vec![1]);
        assert_eq!(tests, 1);
    }
}
