//! Seeded synthetic cities for tests, demos and benchmarks.
//!
//! CBG centroids sit on a jittered square lattice around `center`. Background
//! POIs are scattered uniformly over the lattice square with category counts
//! proportional to `category_weights`. Without planting, each CBG gets
//! `flows_per_cbg` flows to background POIs chosen with exponential distance
//! decay.
//!
//! With a [`PlantSpec`], flows are replaced by planted structure whose
//! catchment membership is known by construction:
//!
//! * a *near band* of POIs around each centroid (distance in
//!   `[near_min_km, near_max_km]`) receives exactly `near_fraction` of that
//!   CBG's `activities_per_cbg` activities;
//! * a *far cluster* outside the city receives the rest;
//! * for every category with far demand, one unvisited *alternative* POI of
//!   the far subcategory is placed in the CBG's near band, with capacity
//!   `ceil(alternative_capacity_factor * demand)`.
//!
//! Near POIs use the subcategory [`near_subcategory`]; far and alternative
//! POIs share [`far_subcategory`]. Neither label occurs among background
//! POIs, so background stock never competes for planted substitutions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CbgRecord, CityDataset, DatasetError, FlowRecord, FunctionCategory, PoiRecord};
use crate::geo::{GeoPoint, SpatialGrid};

pub const NEAR_LABEL: &str = "planted near";
pub const FAR_LABEL: &str = "planted far";

pub fn near_subcategory(category: FunctionCategory) -> String {
    format!("{NEAR_LABEL} {category}")
}

pub fn far_subcategory(category: FunctionCategory) -> String {
    format!("{FAR_LABEL} {category}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub city_id: String,
    pub center_lat: f64,
    pub center_lon: f64,
    pub n_cbgs: usize,
    pub cbg_spacing_km: f64,
    pub cbg_jitter_km: f64,
    /// Background POIs.
    pub n_pois: usize,
    pub category_weights: BTreeMap<FunctionCategory, f64>,
    pub flows_per_cbg: usize,
    /// Mean of the exponential distance decay used to pick flow targets;
    /// 0 picks targets uniformly.
    pub flow_decay_km: f64,
    pub visits_min: u64,
    pub visits_max: u64,
    pub capacity_min: u64,
    pub capacity_max: u64,
    pub plant: Option<PlantSpec>,
}

/// Default composition of the essential POI stock, in percent.
pub fn reference_category_weights() -> BTreeMap<FunctionCategory, f64> {
    use FunctionCategory::*;
    BTreeMap::from([
        (Restaurants, 28.9),
        (Service, 17.1),
        (Religious, 15.8),
        (Grocery, 14.1),
        (Recreation, 7.2),
        (Health, 5.8),
        (Greenspace, 5.6),
        (Education, 5.5),
    ])
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            city_id: "synth".into(),
            center_lat: 41.8781,
            center_lon: -87.6298,
            n_cbgs: 25,
            cbg_spacing_km: 2.0,
            cbg_jitter_km: 0.2,
            n_pois: 1000,
            category_weights: reference_category_weights(),
            flows_per_cbg: 30,
            flow_decay_km: 3.0,
            visits_min: 5,
            visits_max: 40,
            capacity_min: 50,
            capacity_max: 2000,
            plant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    pub near_fraction: f64,
    pub activities_per_cbg: u64,
    pub near_pois_per_cbg: usize,
    pub near_min_km: f64,
    pub near_max_km: f64,
    /// Distance of the far cluster's center east of the city center.
    pub far_distance_km: f64,
    pub far_cluster_radius_km: f64,
    pub far_pois: usize,
    pub alternative_capacity_factor: f64,
    /// Smallest visit count put on a single planted flow.
    pub min_flow_visits: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            near_fraction: 0.6,
            activities_per_cbg: 1000,
            near_pois_per_cbg: 12,
            near_min_km: 0.2,
            near_max_km: 1.0,
            far_distance_km: 60.0,
            far_cluster_radius_km: 0.5,
            far_pois: 16,
            alternative_capacity_factor: 2.0,
            min_flow_visits: 5,
        }
    }
}

fn subcategory_table(category: FunctionCategory) -> &'static [&'static str] {
    use FunctionCategory::*;
    match category {
        Restaurants => &[
            "full-service restaurants",
            "limited-service restaurants",
            "snack and nonalcoholic beverage bars",
            "drinking places",
        ],
        Service => &[
            "beauty salons",
            "commercial banking",
            "drycleaning and laundry services",
            "postal service",
        ],
        Religious => &["religious organizations"],
        Grocery => &[
            "supermarkets and other grocery stores",
            "convenience stores",
            "specialty food stores",
        ],
        Recreation => &[
            "fitness and recreational sports centers",
            "museums",
            "motion picture theaters",
        ],
        Health => &[
            "offices of physicians",
            "offices of dentists",
            "pharmacies and drug stores",
            "offices of mental health practitioners",
        ],
        Greenspace => &["parks", "nature parks and other similar institutions"],
        Education => &[
            "elementary and secondary schools",
            "child day care services",
            "colleges and universities",
        ],
    }
}

// Both reject NaN.
fn positive(x: f64) -> bool {
    x > 0.0
}

fn nonnegative(x: f64) -> bool {
    x >= 0.0
}

fn infeasible(msg: impl Into<String>) -> DatasetError {
    DatasetError::Infeasible(msg.into())
}

/// Splits `n` by largest remainder so counts are exactly proportional
/// whenever `n * w / Σw` is integral.
fn apportion(n: usize, weights: &BTreeMap<FunctionCategory, f64>) -> Vec<(FunctionCategory, usize)> {
    let total: f64 = weights.values().sum();
    let mut parts: Vec<(FunctionCategory, usize, f64)> = weights
        .iter()
        .map(|(c, w)| {
            let exact = n as f64 * w / total;
            // snap values that are integral up to rounding noise
            let snapped = if (exact - exact.round()).abs() < 1e-9 {
                exact.round()
            } else {
                exact
            };
            (*c, snapped.floor() as usize, snapped - snapped.floor())
        })
        .collect();
    let assigned: usize = parts.iter().map(|p| p.1).sum();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| parts[b].2.total_cmp(&parts[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        parts[i].1 += 1;
    }
    parts.into_iter().map(|(c, k, _)| (c, k)).collect()
}

fn offset(center: GeoPoint, east_km: f64, north_km: f64) -> GeoPoint {
    let north = if north_km >= 0.0 {
        center.destination(0.0, north_km)
    } else {
        center.destination(180.0, -north_km)
    };
    if east_km >= 0.0 {
        north.destination(90.0, east_km)
    } else {
        north.destination(270.0, -east_km)
    }
}

fn random_around(rng: &mut ChaCha8Rng, origin: GeoPoint, min_km: f64, max_km: f64) -> GeoPoint {
    let bearing = rng.gen_range(0.0..360.0);
    let dist = if max_km > min_km {
        rng.gen_range(min_km..=max_km)
    } else {
        min_km
    };
    origin.destination(bearing, dist)
}

fn split_evenly(total: u64, parts: usize) -> Vec<u64> {
    let parts = parts as u64;
    (0..parts)
        .map(|i| total / parts + u64::from(i < total % parts))
        .collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn validate(spec: &SynthSpec) -> Result<(), DatasetError> {
    if spec.n_cbgs == 0 {
        return Err(infeasible("n_cbgs must be positive"));
    }
    if spec.n_pois == 0 && spec.plant.is_none() {
        return Err(infeasible("n_pois must be positive"));
    }
    if !positive(spec.cbg_spacing_km) || !nonnegative(spec.cbg_jitter_km) {
        return Err(infeasible("cbg spacing must be positive and jitter nonnegative"));
    }
    if spec.visits_min == 0 || spec.visits_min > spec.visits_max {
        return Err(infeasible("need 1 <= visits_min <= visits_max"));
    }
    if spec.capacity_min > spec.capacity_max {
        return Err(infeasible("need capacity_min <= capacity_max"));
    }
    if !nonnegative(spec.flow_decay_km) {
        return Err(infeasible("flow_decay_km must be nonnegative"));
    }
    let wsum: f64 = spec.category_weights.values().sum();
    if spec.category_weights.values().any(|w| !nonnegative(*w)) || !positive(wsum) {
        return Err(infeasible("category weights must be nonnegative with a positive sum"));
    }
    GeoPoint::new(spec.center_lat, spec.center_lon).map_err(|e| infeasible(e.to_string()))?;
    Ok(())
}

/// Generates a city. Output is a pure function of `(spec, seed)`.
pub fn synth_city(spec: &SynthSpec, seed: u64) -> Result<CityDataset, DatasetError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = GeoPoint::new(spec.center_lat, spec.center_lon).expect("validated");

    let side = (spec.n_cbgs as f64).sqrt().ceil() as usize;
    let half_span = spec.cbg_spacing_km * side as f64 / 2.0;

    let mut cbgs = Vec::with_capacity(spec.n_cbgs);
    for i in 0..spec.n_cbgs {
        let (row, col) = (i / side, i % side);
        let east = (col as f64 - (side as f64 - 1.0) / 2.0) * spec.cbg_spacing_km;
        let north = (row as f64 - (side as f64 - 1.0) / 2.0) * spec.cbg_spacing_km;
        let mut centroid = offset(center, east, north);
        if spec.cbg_jitter_km > 0.0 {
            centroid = random_around(&mut rng, centroid, 0.0, spec.cbg_jitter_km);
        }
        let mut shares: Vec<f64> = (0..5).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = shares.iter().sum();
        shares.iter_mut().for_each(|x| *x = round6(*x / s));
        cbgs.push(CbgRecord {
            cbg_id: format!("cbg{i:05}"),
            centroid,
            population: rng.gen_range(600..=3000),
            median_income: Some(rng.gen_range(20_000..=200_000) as f64),
            pct_white: Some(shares[0]),
            pct_black: Some(shares[1]),
            pct_asian: Some(shares[2]),
            pct_hispanic: Some(shares[3]),
        });
    }

    let mut pois = Vec::new();
    let mut categories: Vec<FunctionCategory> = apportion(spec.n_pois, &spec.category_weights)
        .into_iter()
        .flat_map(|(c, k)| std::iter::repeat_n(c, k))
        .collect();
    categories.shuffle(&mut rng);
    for (i, category) in categories.into_iter().enumerate() {
        let east = rng.gen_range(-half_span..=half_span);
        let north = rng.gen_range(-half_span..=half_span);
        let table = subcategory_table(category);
        pois.push(PoiRecord {
            poi_id: format!("poi{i:07}"),
            location: offset(center, east, north),
            category,
            subcategory: table[rng.gen_range(0..table.len())].to_string(),
            total_visits: rng.gen_range(spec.capacity_min..=spec.capacity_max),
            is_parent: false,
        });
    }

    let mut flows = Vec::new();
    match &spec.plant {
        None => background_flows(spec, &mut rng, &cbgs, &pois, &mut flows),
        Some(plant) => plant_structure(spec, plant, &mut rng, center, half_span, &cbgs, &mut pois, &mut flows)?,
    }

    // capacity proxy: a POI has at least as many visits as flow into it
    let mut incoming = vec![0u64; pois.len()];
    let index: std::collections::HashMap<&str, usize> =
        pois.iter().enumerate().map(|(i, p)| (p.poi_id.as_str(), i)).collect();
    for f in &flows {
        incoming[index[f.poi_id.as_str()]] += f.visits;
    }
    for (poi, inc) in pois.iter_mut().zip(incoming) {
        poi.total_visits = poi.total_visits.max(inc);
    }

    CityDataset::new(spec.city_id.clone(), pois, cbgs, flows)
}

fn background_flows(
    spec: &SynthSpec,
    rng: &mut ChaCha8Rng,
    cbgs: &[CbgRecord],
    pois: &[PoiRecord],
    flows: &mut Vec<FlowRecord>,
) {
    let per_cbg = spec.flows_per_cbg.min(pois.len());
    if per_cbg == 0 {
        return;
    }
    // The first radius that finds anything yields the true nearest POI, so
    // the probe radius only affects speed. Start near the mean POI spacing.
    let (mut lat, mut lon) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for p in pois {
        lat = (lat.0.min(p.location.lat()), lat.1.max(p.location.lat()));
        lon = (lon.0.min(p.location.lon()), lon.1.max(p.location.lon()));
    }
    let span_km = (lat.1 - lat.0).max(lon.1 - lon.0) * 111.0;
    let start_km = (span_km / (pois.len() as f64).sqrt()).clamp(0.01, spec.flow_decay_km.max(0.01));
    let grid = (spec.flow_decay_km > 0.0).then(|| {
        let cell = (start_km / 111.0).max(1e-4);
        SpatialGrid::build(pois.iter().enumerate().map(|(i, p)| (i, p.location)), cell).expect("positive cell")
    });
    for cbg in cbgs {
        let mut chosen: Vec<usize> = Vec::with_capacity(per_cbg);
        let mut attempts = 0;
        while chosen.len() < per_cbg && attempts < per_cbg * 20 {
            attempts += 1;
            let target = match &grid {
                Some(grid) => {
                    let dist = -(1.0 - rng.gen::<f64>()).ln() * spec.flow_decay_km;
                    let bearing = rng.gen_range(0.0..360.0);
                    let probe = cbg.centroid.destination(bearing, dist);
                    let mut radius = start_km;
                    loop {
                        if let Some((i, _)) = grid.nearest(probe, radius) {
                            break i;
                        }
                        radius *= 2.0;
                    }
                }
                None => rng.gen_range(0..pois.len()),
            };
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for target in chosen {
            flows.push(FlowRecord {
                cbg_id: cbg.cbg_id.clone(),
                poi_id: pois[target].poi_id.clone(),
                visits: rng.gen_range(spec.visits_min..=spec.visits_max),
            });
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn plant_structure(
    spec: &SynthSpec,
    plant: &PlantSpec,
    rng: &mut ChaCha8Rng,
    center: GeoPoint,
    half_span: f64,
    cbgs: &[CbgRecord],
    pois: &mut Vec<PoiRecord>,
    flows: &mut Vec<FlowRecord>,
) -> Result<(), DatasetError> {
    let f = plant.near_fraction;
    if !(0.0..=1.0).contains(&f) {
        return Err(infeasible("near_fraction must lie in [0, 1]"));
    }
    let total = plant.activities_per_cbg;
    let near_exact = f * total as f64;
    let near_total = near_exact.round() as u64;
    if (near_exact - near_total as f64).abs() > 1e-9 {
        return Err(infeasible(format!(
            "near_fraction {f} x activities_per_cbg {total} is not a whole number of activities"
        )));
    }
    let far_total = total - near_total;
    if plant.min_flow_visits == 0 {
        return Err(infeasible("min_flow_visits must be positive"));
    }
    if (near_total > 0 && near_total < plant.min_flow_visits) || (far_total > 0 && far_total < plant.min_flow_visits) {
        return Err(infeasible("planted demand too small for min_flow_visits"));
    }
    if near_total > 0 && plant.near_pois_per_cbg == 0 {
        return Err(infeasible("near demand requires near_pois_per_cbg > 0"));
    }
    if far_total > 0 && plant.far_pois == 0 {
        return Err(infeasible("far demand requires far_pois > 0"));
    }
    if !(plant.near_min_km >= 0.0 && plant.near_min_km <= plant.near_max_km) {
        return Err(infeasible("need 0 <= near_min_km <= near_max_km"));
    }
    if cbgs.len() > 1 && spec.cbg_spacing_km - 2.0 * spec.cbg_jitter_km <= 2.0 * plant.near_max_km {
        return Err(infeasible(
            "near bands of neighbouring CBGs overlap; increase cbg_spacing_km or reduce near_max_km",
        ));
    }
    let extent = (half_span * std::f64::consts::SQRT_2).max(half_span + spec.cbg_jitter_km + plant.near_max_km);
    if plant.far_distance_km - plant.far_cluster_radius_km <= extent {
        return Err(infeasible(format!(
            "far cluster (distance {} km, radius {} km) lies inside the city radius {:.3} km",
            plant.far_distance_km, plant.far_cluster_radius_km, extent
        )));
    }
    if !nonnegative(plant.alternative_capacity_factor) {
        return Err(infeasible("alternative_capacity_factor must be nonnegative"));
    }

    let mut next_id = pois.len();
    let mut new_poi = |pois: &mut Vec<PoiRecord>, location, category, subcategory: String, cap| {
        let poi_id = format!("poi{next_id:07}");
        next_id += 1;
        pois.push(PoiRecord {
            poi_id: poi_id.clone(),
            location,
            category,
            subcategory,
            total_visits: cap,
            is_parent: false,
        });
        poi_id
    };

    let far_center = center.destination(90.0, plant.far_distance_km);
    let mut far_ids = Vec::new();
    let far_count = if far_total > 0 { plant.far_pois } else { 0 };
    for q in 0..far_count {
        let category = FunctionCategory::ALL[q % 8];
        let loc = random_around(rng, far_center, 0.0, plant.far_cluster_radius_km);
        far_ids.push((new_poi(pois, loc, category, far_subcategory(category), 0), category));
    }

    for (i, cbg) in cbgs.iter().enumerate() {
        if near_total > 0 {
            let k = plant
                .near_pois_per_cbg
                .min((near_total / plant.min_flow_visits) as usize)
                .max(1);
            for (q, visits) in split_evenly(near_total, k).into_iter().enumerate() {
                let category = FunctionCategory::ALL[q % 8];
                let loc = random_around(rng, cbg.centroid, plant.near_min_km, plant.near_max_km);
                let poi_id = new_poi(pois, loc, category, near_subcategory(category), 0);
                flows.push(FlowRecord {
                    cbg_id: cbg.cbg_id.clone(),
                    poi_id,
                    visits,
                });
            }
        }
        if far_total > 0 {
            let k = far_ids.len().min((far_total / plant.min_flow_visits) as usize).max(1);
            let mut demand: BTreeMap<FunctionCategory, u64> = BTreeMap::new();
            for (q, visits) in split_evenly(far_total, k).into_iter().enumerate() {
                let (poi_id, category) = &far_ids[(i + q) % far_ids.len()];
                *demand.entry(*category).or_default() += visits;
                flows.push(FlowRecord {
                    cbg_id: cbg.cbg_id.clone(),
                    poi_id: poi_id.clone(),
                    visits,
                });
            }
            if plant.alternative_capacity_factor > 0.0 {
                for (category, d) in demand {
                    let cap = (plant.alternative_capacity_factor * d as f64).ceil() as u64;
                    let loc = random_around(rng, cbg.centroid, plant.near_min_km, plant.near_max_km);
                    new_poi(pois, loc, category, far_subcategory(category), cap);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{canonical_csv, essential_share};
    use crate::geo::haversine_km;

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec::default();
        let a = synth_city(&spec, 7).unwrap();
        let b = synth_city(&spec, 7).unwrap();
        assert_eq!(canonical_csv(&a), canonical_csv(&b));
        let c = synth_city(&spec, 8).unwrap();
        assert_ne!(canonical_csv(&a), canonical_csv(&c));
    }

    #[test]
    fn reference_weights_reproduce_composition() {
        let spec = SynthSpec {
            n_pois: 1000,
            ..SynthSpec::default()
        };
        let ds = synth_city(&spec, 1).unwrap();
        let counts: Vec<usize> = essential_share(&ds).unwrap().iter().map(|s| s.count).collect();
        assert_eq!(counts, vec![289, 171, 158, 141, 72, 58, 56, 55]);
    }

    #[test]
    fn planted_flows_split_exactly() {
        let spec = SynthSpec {
            n_cbgs: 9,
            cbg_spacing_km: 3.0,
            plant: Some(PlantSpec {
                near_fraction: 0.315,
                ..PlantSpec::default()
            }),
            ..SynthSpec::default()
        };
        let ds = synth_city(&spec, 3).unwrap();
        for c in 0..ds.cbgs().len() {
            let near: u64 = ds
                .flows_of(c)
                .iter()
                .filter(|f| ds.poi(f.poi).subcategory.starts_with(NEAR_LABEL))
                .map(|f| f.visits)
                .sum();
            assert_eq!(ds.act_city(c), 1000);
            assert_eq!(near, 315);
            for f in ds.flows_of(c) {
                let d = haversine_km(ds.cbg(c).centroid, ds.poi(f.poi).location);
                if ds.poi(f.poi).subcategory.starts_with(NEAR_LABEL) {
                    assert!(d <= 1.0 + 1e-9);
                } else {
                    assert!(d > 40.0);
                }
                assert!(f.visits >= 5);
            }
        }
    }

    #[test]
    fn infeasible_specs_rejected() {
        let inside = SynthSpec {
            cbg_spacing_km: 3.0,
            plant: Some(PlantSpec {
                far_distance_km: 3.0,
                ..PlantSpec::default()
            }),
            ..SynthSpec::default()
        };
        assert!(matches!(synth_city(&inside, 0), Err(DatasetError::Infeasible(_))));
        let fractional = SynthSpec {
            plant: Some(PlantSpec {
                near_fraction: 0.3333,
                activities_per_cbg: 100,
                ..PlantSpec::default()
            }),
            ..SynthSpec::default()
        };
        assert!(synth_city(&fractional, 0).is_err());
        assert!(synth_city(
            &SynthSpec {
                n_cbgs: 0,
                ..SynthSpec::default()
            },
            0
        )
        .is_err());
    }
}
