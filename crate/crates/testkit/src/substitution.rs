//! Exhaustive substitution oracle and matching dataset builder.

use rand::Rng;

use proximity_core::dataset::{CbgRecord, CityDataset, FlowRecord, FunctionCategory, PoiRecord};
use proximity_core::geo::GeoPoint;

/// One subcategory: out-of-reach demand and the capacities of its
/// in-reach, unvisited candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SubInstance {
    pub demand: u64,
    pub caps: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionInstance {
    pub subs: Vec<SubInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Largest feasible substituted count per subcategory.
    pub best: Vec<u64>,
    /// A feasible assignment reaching `best`, per candidate.
    pub witness: Vec<Vec<u64>>,
}

// Depth-first over every vector x with 0 ≤ x_i ≤ cap_i and Σx ≤ demand.
fn enumerate(caps: &[u64], left: u64, cur: &mut Vec<u64>, best: &mut (u64, Vec<u64>)) {
    if cur.len() == caps.len() {
        let total: u64 = cur.iter().sum();
        if total > best.0 {
            *best = (total, cur.clone());
        }
        return;
    }
    let cap = caps[cur.len()];
    for x in 0..=cap.min(left) {
        cur.push(x);
        enumerate(caps, left - x, cur, best);
        cur.pop();
    }
}

/// Maximum substitutable count per subcategory by full enumeration.
/// Intended for demand ≤ 20 and ≤ 5 candidates per subcategory.
pub fn substitution_oracle(inst: &SubstitutionInstance) -> OracleResult {
    let mut best = Vec::new();
    let mut witness = Vec::new();
    for s in &inst.subs {
        let mut b = (0, vec![0; s.caps.len()]);
        enumerate(&s.caps, s.demand, &mut Vec::new(), &mut b);
        best.push(b.0);
        witness.push(b.1);
    }
    OracleResult { best, witness }
}

/// Random instance with at most 6 subcategories, 20 activities in total
/// and 5 candidates per subcategory; capacities may be zero.
pub fn random_instance(rng: &mut impl Rng) -> SubstitutionInstance {
    let n_subs = rng.gen_range(1..=6);
    let mut budget: u64 = 20;
    let mut subs = Vec::new();
    for _ in 0..n_subs {
        let demand = rng.gen_range(0..=budget.min(8));
        budget -= demand;
        let n_caps = rng.gen_range(0..=5);
        let caps = (0..n_caps).map(|_| rng.gen_range(0..=6)).collect();
        subs.push(SubInstance { demand, caps });
    }
    SubstitutionInstance { subs }
}

const KM_PER_DEG: f64 = 111.194_926_644_558_73;

fn at_km(east_km: f64, north_km: f64) -> GeoPoint {
    GeoPoint::new(north_km / KM_PER_DEG, east_km / KM_PER_DEG).unwrap()
}

fn poi(id: String, loc: GeoPoint, sub: &str, cap: u64) -> PoiRecord {
    PoiRecord {
        poi_id: id,
        location: loc,
        category: FunctionCategory::Health,
        subcategory: sub.to_string(),
        total_visits: cap,
        is_parent: false,
    }
}

/// Dataset realizing `inst` for a single CBG at the origin, meant for a
/// walking catchment of radius 1.25 km:
///
/// - demand sits on 1–2 POIs 5 km away, so it is out of reach;
/// - candidates lie within 1 km;
/// - decoys that must never be used sit in every subcategory: a visited
///   in-reach POI, an unvisited out-of-reach POI with spare capacity, and
///   an unrelated subcategory nearby.
///
/// Candidate capacity 0 is modelled as a candidate that is absent, since
/// datasets reject zero-visit POIs. Returns the dataset and, per
/// subcategory, the ids of its candidates in `inst` order.
pub fn instance_dataset(inst: &SubstitutionInstance, rng: &mut impl Rng) -> (CityDataset, Vec<Vec<Option<String>>>) {
    let mut pois = Vec::new();
    let mut flows = Vec::new();
    let mut ids = Vec::new();
    let flow = |poi_id: &str, visits| FlowRecord {
        cbg_id: "cbg".into(),
        poi_id: poi_id.to_string(),
        visits,
    };
    for (s, sub) in inst.subs.iter().enumerate() {
        let label = format!("sub {s}");
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        if sub.demand > 0 {
            let split = if sub.demand > 1 && rng.gen_bool(0.5) {
                rng.gen_range(1..sub.demand)
            } else {
                sub.demand
            };
            for (k, v) in [split, sub.demand - split]
                .into_iter()
                .enumerate()
                .filter(|(_, v)| *v > 0)
            {
                let id = format!("s{s}_out{k}");
                let r = 5.0 + k as f64;
                pois.push(poi(id.clone(), at_km(r * angle.cos(), r * angle.sin()), &label, 1000));
                flows.push(flow(&id, v));
            }
        }
        let mut cand_ids = Vec::new();
        for (c, cap) in sub.caps.iter().enumerate() {
            if *cap == 0 {
                cand_ids.push(None);
                continue;
            }
            let id = format!("s{s}_cand{c}");
            let (r, a) = (rng.gen_range(0.05..1.0), rng.gen_range(0.0..std::f64::consts::TAU));
            pois.push(poi(id.clone(), at_km(r * a.cos(), r * a.sin()), &label, *cap));
            cand_ids.push(Some(id));
        }
        ids.push(cand_ids);

        let visited = format!("s{s}_visited");
        pois.push(poi(visited.clone(), at_km(-0.3, 0.1 * s as f64), &label, 1000));
        flows.push(flow(&visited, 1));
        pois.push(poi(format!("s{s}_beyond"), at_km(0.0, -2.0 - s as f64), &label, 1000));
    }
    pois.push(poi("decoy_other".into(), at_km(0.1, 0.1), "unrelated", 1000));
    let cbg = CbgRecord {
        cbg_id: "cbg".into(),
        centroid: at_km(0.0, 0.0),
        population: 1000,
        median_income: None,
        pct_white: None,
        pct_black: None,
        pct_asian: None,
        pct_hispanic: None,
    };
    (CityDataset::new("oracle", pois, vec![cbg], flows).unwrap(), ids)
}
