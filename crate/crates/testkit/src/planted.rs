//! Closed-form expectations for planted synthetic cities, plus the small
//! hand-checked distance/carbon fixture.

use std::collections::BTreeSet;

use proximity_core::dataset::{CbgRecord, CityDataset, FlowRecord, FunctionCategory, PoiRecord, FAR_LABEL, NEAR_LABEL};
use proximity_core::geo::GeoPoint;

use crate::spatial::great_circle_km;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedExpectation {
    pub cbg: usize,
    pub pct_act: f64,
    pub pct_sat: f64,
    pub reduced_dist: Option<f64>,
    pub reduced_carbon: Option<f64>,
}

/// Expected indicators for every CBG of a planted city, read off the
/// construction: near-label flows are in reach, far-label flows are not,
/// and each CBG's own alternative for category j is the unvisited far-label
/// POI of category j within `near_max_km` of its centroid, with capacity
/// for all of that category's displaced activities.
///
/// `c_car` and `c_mode` are the emission factors for the carbon closed form.
pub fn planted_expectations(ds: &CityDataset, near_max_km: f64, c_car: f64, c_mode: f64) -> Vec<PlantedExpectation> {
    let mut out = Vec::new();
    for (ci, cbg) in ds.cbgs().iter().enumerate() {
        let visited: BTreeSet<&str> = ds
            .flows()
            .iter()
            .filter(|f| f.cbg_id == cbg.cbg_id)
            .map(|f| f.poi_id.as_str())
            .collect();
        let (mut act_in, mut act_out) = (0u64, [0u64; 8]);
        let (mut d_in, mut d_out) = (0.0, 0.0);
        for f in ds.flows().iter().filter(|f| f.cbg_id == cbg.cbg_id) {
            let p = ds.poi(ds.poi_idx(&f.poi_id).unwrap());
            let d = f.visits as f64 * great_circle_km(cbg.centroid, p.location);
            if p.subcategory.starts_with(NEAR_LABEL) {
                act_in += f.visits;
                d_in += d;
            } else {
                assert!(p.subcategory.starts_with(FAR_LABEL), "unplanted flow {f:?}");
                act_out[p.category as usize] += f.visits;
                d_out += d;
            }
        }
        let mut alt_km = 0.0;
        for cat in FunctionCategory::ALL {
            let demand = act_out[cat as usize];
            if demand == 0 {
                continue;
            }
            let own: Vec<f64> = ds
                .pois()
                .iter()
                .filter(|p| p.category == cat && p.subcategory.starts_with(FAR_LABEL))
                .filter(|p| !visited.contains(p.poi_id.as_str()))
                .map(|p| great_circle_km(cbg.centroid, p.location))
                .filter(|d| *d <= near_max_km + 1e-9)
                .collect();
            assert_eq!(
                own.len(),
                1,
                "CBG {} category {cat}: expected one alternative",
                cbg.cbg_id
            );
            alt_km += demand as f64 * own[0];
        }
        let total = act_in + act_out.iter().sum::<u64>();
        let d_city = d_in + d_out;
        let carbon_den = d_out * c_car + d_in * c_mode;
        out.push(PlantedExpectation {
            cbg: ci,
            pct_act: act_in as f64 / total as f64,
            pct_sat: 1.0,
            reduced_dist: (d_city > 0.0).then(|| (d_out - alt_km) / d_city),
            reduced_carbon: (carbon_den > 0.0).then(|| (d_out * c_car - alt_km * c_mode) / carbon_den),
        });
    }
    out
}

const KM_PER_DEG: f64 = 111.194_926_644_558_73;

fn on_equator(id: &str, km: f64, cap: u64) -> PoiRecord {
    PoiRecord {
        poi_id: id.into(),
        location: GeoPoint::new(0.0, km / KM_PER_DEG).unwrap(),
        category: FunctionCategory::Grocery,
        subcategory: "supermarket".into(),
        total_visits: cap,
        is_parent: false,
    }
}

/// One CBG at (0, 0) with 10 visits to a POI 1 km east, 5 visits to a POI
/// 4 km east, and an unvisited POI of the same subcategory 1 km east with
/// capacity 5. Under cycling (3.75 km radius) this gives
/// dist_city = 30 km, distance reduction (20 − 5)/30 = 0.5 and carbon
/// reduction (20·197 − 5·21)/(20·197 + 10·21) = 3835/4150.
pub fn worked_case() -> CityDataset {
    let pois = vec![
        on_equator("alt", 1.0, 5),
        on_equator("in", 1.0, 100),
        on_equator("out", 4.0, 100),
    ];
    let cbg = CbgRecord {
        cbg_id: "worked".into(),
        centroid: GeoPoint::new(0.0, 0.0).unwrap(),
        population: 1000,
        median_income: None,
        pct_white: None,
        pct_black: None,
        pct_asian: None,
        pct_hispanic: None,
    };
    let flow = |poi: &str, visits| FlowRecord {
        cbg_id: "worked".into(),
        poi_id: poi.into(),
        visits,
    };
    CityDataset::new("worked", pois, vec![cbg], vec![flow("in", 10), flow("out", 5)]).unwrap()
}
