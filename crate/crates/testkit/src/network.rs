//! All-pairs isochrone oracle and random road networks.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;

use proximity_core::catchment::{EdgeRecord, Mode};
use proximity_core::geo::GeoPoint;

#[derive(Debug, Clone)]
pub struct RandomNetwork {
    pub nodes: Vec<(u64, GeoPoint)>,
    pub edges: Vec<EdgeRecord>,
}

/// Floyd–Warshall over `edges` for `mode`, then every node id whose least
/// travel time from `origin` is within `budget_min`. Intended for ≤ 50 nodes.
pub fn isochrone_oracle(
    node_ids: &[u64],
    edges: &[EdgeRecord],
    mode: Mode,
    origin: u64,
    budget_min: f64,
) -> BTreeSet<u64> {
    let n = node_ids.len();
    let pos: HashMap<u64, usize> = node_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let slot = Mode::ALL.iter().position(|m| *m == mode).unwrap();
    for e in edges {
        if let Some(v) = e.speeds_kmh[slot] {
            let (a, b) = (pos[&e.from], pos[&e.to]);
            let t = e.length_m / 1000.0 / v * 60.0;
            if t < d[a][b] {
                d[a][b] = t;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let o = pos[&origin];
    (0..n).filter(|&j| d[o][j] <= budget_min).map(|j| node_ids[j]).collect()
}

/// Random directed network with 2–`max_nodes` nodes in a ~3 km square.
/// Node ids are distinct and shuffled relative to creation order; about
/// one node in ten has no edges at all.
pub fn random_network(rng: &mut impl Rng, max_nodes: usize) -> RandomNetwork {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + rng.gen_range(0..7)).collect();
    ids.shuffle(rng);
    let nodes: Vec<(u64, GeoPoint)> = ids
        .iter()
        .map(|id| {
            let p = GeoPoint::new(41.0 + rng.gen_range(0.0..0.03), -87.0 + rng.gen_range(0.0..0.03)).unwrap();
            (*id, p)
        })
        .collect();
    let isolated: BTreeSet<usize> = (0..n).filter(|_| rng.gen_bool(0.1)).collect();
    let mut edges = Vec::new();
    let degree = rng.gen_range(1.0..4.0);
    for a in 0..n {
        for b in 0..n {
            if a == b || isolated.contains(&a) || isolated.contains(&b) || !rng.gen_bool((degree / n as f64).min(1.0)) {
                continue;
            }
            let mut speeds_kmh = [None; 4];
            for s in speeds_kmh.iter_mut() {
                if rng.gen_bool(0.7) {
                    *s = Some(rng.gen_range(3.0..60.0));
                }
            }
            edges.push(EdgeRecord {
                from: ids[a],
                to: ids[b],
                length_m: rng.gen_range(20.0..2500.0),
                speeds_kmh,
            });
        }
    }
    RandomNetwork { nodes, edges }
}
