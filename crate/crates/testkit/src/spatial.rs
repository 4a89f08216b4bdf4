//! Linear-scan spatial references with their own distance and
//! containment code.

use rand::Rng;

use proximity_core::geo::GeoPoint;

const R_KM: f64 = 6371.0;

/// Haversine distance, written out independently of the production code.
pub fn great_circle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dl = (b.lon() - a.lon()).to_radians();
    let dp = p2 - p1;
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R_KM * h.sqrt().min(1.0).asin()
}

/// Ids of every point within `radius_km` of `center`, ascending.
pub fn brute_radius(points: &[(usize, GeoPoint)], center: GeoPoint, radius_km: f64) -> Vec<usize> {
    let mut out: Vec<usize> = points
        .iter()
        .filter(|(_, p)| great_circle_km(center, *p) <= radius_km)
        .map(|(id, _)| *id)
        .collect();
    out.sort_unstable();
    out
}

/// Nonzero winding number test in the (lon, lat) plane. Boundary points
/// are not treated specially; callers avoid them.
pub fn winding_contains(p: GeoPoint, ring: &[GeoPoint]) -> bool {
    let (x, y) = (p.lon(), p.lat());
    let mut wn = 0i32;
    for i in 0..ring.len() {
        let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
        let (ax, ay, bx, by) = (a.lon(), a.lat(), b.lon(), b.lat());
        let side = (bx - ax) * (y - ay) - (x - ax) * (by - ay);
        if ay <= y {
            if by > y && side > 0.0 {
                wn += 1;
            }
        } else if by <= y && side < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

pub fn random_point(rng: &mut impl Rng, center: GeoPoint, half_deg: f64) -> GeoPoint {
    GeoPoint::new(
        center.lat() + rng.gen_range(-half_deg..half_deg),
        center.lon() + rng.gen_range(-half_deg..half_deg),
    )
    .unwrap()
}

/// Simple star-shaped ring: vertices at increasing angles around `center`
/// with random radii, so the polygon never self-intersects.
pub fn random_star_ring(rng: &mut impl Rng, center: GeoPoint, max_deg: f64) -> Vec<GeoPoint> {
    let n = rng.gen_range(3..=16);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    if angles.len() < 3 {
        angles = vec![0.0, 2.1, 4.2];
    }
    angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(0.2 * max_deg..max_deg);
            GeoPoint::new(center.lat() + r * a.sin(), center.lon() + r * a.cos()).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_degree_of_longitude_on_the_equator() {
        let a = GeoPoint::new(0.0, 0.0).unwrap();
        let b = GeoPoint::new(0.0, 1.0).unwrap();
        assert!((great_circle_km(a, b) - 111.194_926_644_558_73).abs() < 1e-9);
    }

    #[test]
    fn winding_on_unit_square() {
        let sq: Vec<GeoPoint> = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]
            .iter()
            .map(|(la, lo)| GeoPoint::new(*la, *lo).unwrap())
            .collect();
        assert!(winding_contains(GeoPoint::new(0.5, 0.5).unwrap(), &sq));
        assert!(!winding_contains(GeoPoint::new(1.5, 0.5).unwrap(), &sq));
    }
}
