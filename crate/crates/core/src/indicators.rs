//! Per-(CBG, mode) accessibility indicators.
//!
//! For one catchment the [`ActivityLedger`] buckets a CBG's recorded visits
//! into reachable and out-of-reach activities per (category, subcategory).
//! [`plan_substitution`] then moves out-of-reach activities onto unvisited
//! reachable POIs of the same subcategory, subject to each POI's capacity
//! (its total visits). The five indicators follow from the two.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catchment::{Catchment, CatchmentProvider, CatchmentSpec, Mode};
use crate::dataset::{CityDataset, FunctionCategory};

const N_CAT: usize = FunctionCategory::ALL.len();

/// Grams of CO₂ per person-km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmissionFactors {
    pub car: f64,
    pub transit: f64,
    pub walk: f64,
    pub cycle: f64,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        Self {
            car: 197.0,
            transit: 105.0,
            walk: 26.0,
            cycle: 21.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("emission factor for {mode} must be positive and finite, got {value}")]
pub struct FactorError {
    pub mode: Mode,
    pub value: f64,
}

impl EmissionFactors {
    pub fn get(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Walk => self.walk,
            Mode::Cycle => self.cycle,
            Mode::Transit => self.transit,
            Mode::Car => self.car,
        }
    }

    pub fn validate(&self) -> Result<(), FactorError> {
        for mode in Mode::ALL {
            let value = self.get(mode);
            if !(value.is_finite() && value > 0.0) {
                return Err(FactorError { mode, value });
            }
        }
        Ok(())
    }
}

/// Activity counts and summed trip distances for one (category, subcategory).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupActivity {
    pub group: u32,
    pub act_within: u64,
    pub act_out: u64,
    pub dist_within_km: f64,
    pub dist_out_km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CategoryActivity {
    pub act_within: u64,
    pub act_out: u64,
    pub dist_within_km: f64,
    pub dist_out_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityLedger {
    pub cbg: usize,
    pub mode: Mode,
    /// Ascending by group, only groups the CBG visits.
    pub groups: Vec<GroupActivity>,
    pub act_city: u64,
    pub dist_city_km: f64,
}

impl ActivityLedger {
    pub fn act_within(&self) -> u64 {
        self.groups.iter().map(|g| g.act_within).sum()
    }

    pub fn act_out(&self) -> u64 {
        self.groups.iter().map(|g| g.act_out).sum()
    }

    pub fn dist_within_km(&self) -> f64 {
        self.groups.iter().map(|g| g.dist_within_km).sum()
    }

    pub fn dist_out_km(&self) -> f64 {
        self.groups.iter().map(|g| g.dist_out_km).sum()
    }

    /// Totals per function category, indexed as [`FunctionCategory::ALL`].
    pub fn by_category(&self, ds: &CityDataset) -> [CategoryActivity; N_CAT] {
        let mut out = [CategoryActivity::default(); N_CAT];
        for g in &self.groups {
            let c = &mut out[ds.group(g.group).0 as usize];
            c.act_within += g.act_within;
            c.act_out += g.act_out;
            c.dist_within_km += g.dist_within_km;
            c.dist_out_km += g.dist_out_km;
        }
        out
    }
}

/// Activities moved to one alternative POI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub group: u32,
    pub poi: usize,
    pub count: u64,
    /// Centroid distance per activity.
    pub dist_km: f64,
}

/// Out-of-reach activities that were substituted, attributed to their
/// original POI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub group: u32,
    pub origin_poi: usize,
    pub count: u64,
    pub dist_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubstitutionPlan {
    pub cbg: usize,
    pub mode: Mode,
    pub assignments: Vec<Assignment>,
    pub displaced: Vec<Displacement>,
    /// Substituted activities per category, indexed as [`FunctionCategory::ALL`].
    pub act_alt: [u64; N_CAT],
    /// Σ per-activity distance to the assigned alternative, per category.
    pub dist_alt_km: [f64; N_CAT],
}

impl SubstitutionPlan {
    pub fn act_alt_total(&self) -> u64 {
        self.act_alt.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub num_poi: u64,
    pub pct_act_15min: Option<f64>,
    pub pct_act_sat_15min: Option<f64>,
    pub pct_reduced_dist: Option<f64>,
    pub pct_reduced_carbon: Option<f64>,
}

/// The five indicator columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    NumPoi,
    PctAct15min,
    PctActSat15min,
    PctReducedDist,
    PctReducedCarbon,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 5] = [
        IndicatorKind::NumPoi,
        IndicatorKind::PctAct15min,
        IndicatorKind::PctActSat15min,
        IndicatorKind::PctReducedDist,
        IndicatorKind::PctReducedCarbon,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            IndicatorKind::NumPoi => "num_poi",
            IndicatorKind::PctAct15min => "pct_act_15min",
            IndicatorKind::PctActSat15min => "pct_act_sat_15min",
            IndicatorKind::PctReducedDist => "pct_reduced_dist",
            IndicatorKind::PctReducedCarbon => "pct_reduced_carbon",
        }
    }
}

impl IndicatorSet {
    pub fn get(&self, kind: IndicatorKind) -> Option<f64> {
        match kind {
            IndicatorKind::NumPoi => Some(self.num_poi as f64),
            IndicatorKind::PctAct15min => self.pct_act_15min,
            IndicatorKind::PctActSat15min => self.pct_act_sat_15min,
            IndicatorKind::PctReducedDist => self.pct_reduced_dist,
            IndicatorKind::PctReducedCarbon => self.pct_reduced_carbon,
        }
    }
}

/// Number of reachable essential POIs. Every POI in a [`CityDataset`] is
/// essential, so this is the catchment size.
pub fn count_accessible_pois(catchment: &Catchment) -> u64 {
    catchment.len() as u64
}

pub fn build_ledger(ds: &CityDataset, catchment: &Catchment) -> ActivityLedger {
    let mut groups: Vec<GroupActivity> = Vec::new();
    let mut slot: HashMap<u32, usize> = HashMap::new();
    let (mut act_city, mut dist_city_km) = (0, 0.0);
    for f in ds.flows_of(catchment.cbg) {
        let g = ds.poi_group(f.poi);
        let i = *slot.entry(g).or_insert_with(|| {
            groups.push(GroupActivity {
                group: g,
                ..GroupActivity::default()
            });
            groups.len() - 1
        });
        let d = f.visits as f64 * catchment.dist_km(ds, f.poi);
        if catchment.is_reachable(f.poi) {
            groups[i].act_within += f.visits;
            groups[i].dist_within_km += d;
        } else {
            groups[i].act_out += f.visits;
            groups[i].dist_out_km += d;
        }
        act_city += f.visits;
        dist_city_km += d;
    }
    groups.sort_by_key(|g| g.group);
    ActivityLedger {
        cbg: catchment.cbg,
        mode: catchment.spec.mode,
        groups,
        act_city,
        dist_city_km,
    }
}

/// Share of activities inside the catchment; `None` when the CBG has no
/// activities.
pub fn pct_act_within(ledger: &ActivityLedger) -> Option<f64> {
    (ledger.act_city > 0).then(|| ledger.act_within() as f64 / ledger.act_city as f64)
}

type Candidates = Vec<(f64, usize)>;

/// Per subcategory, assigns min(out-of-reach demand, candidate capacity)
/// activities to reachable, unvisited POIs of that subcategory, nearest
/// first with ties broken by POI id. Displaced activities are taken from
/// the farthest original POIs first.
pub fn plan_substitution(ds: &CityDataset, catchment: &Catchment, ledger: &ActivityLedger) -> SubstitutionPlan {
    let mut plan = SubstitutionPlan {
        cbg: ledger.cbg,
        mode: ledger.mode,
        assignments: Vec::new(),
        displaced: Vec::new(),
        act_alt: [0; N_CAT],
        dist_alt_km: [0.0; N_CAT],
    };
    // Dense per-group slots: the candidate scan touches every reachable POI.
    let mut slot = vec![u32::MAX; ds.group_count()];
    // (group, activities out of reach, candidates as (distance, poi))
    let mut demand: Vec<(u32, u64, Candidates)> = Vec::new();
    for g in ledger.groups.iter().filter(|g| g.act_out > 0) {
        slot[g.group as usize] = demand.len() as u32;
        demand.push((g.group, g.act_out, Vec::new()));
    }
    if demand.is_empty() {
        return plan;
    }
    let flows = ds.flows_of(catchment.cbg);
    let visited = |poi: usize| flows.binary_search_by_key(&poi, |f| f.poi).is_ok();

    for &poi in catchment.reachable() {
        let s = slot[ds.poi_group(poi) as usize];
        if s != u32::MAX && !visited(poi) {
            demand[s as usize].2.push((catchment.dist_km(ds, poi), poi));
        }
    }

    demand.sort_unstable_by_key(|d| d.0);
    for (g, want, mut cands) in demand {
        if cands.is_empty() {
            continue;
        }
        let nearest = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        // A few nearest candidates usually cover the demand; order those
        // first and sort the tail only if it is needed.
        let head = cands.len().min(16);
        if head < cands.len() {
            cands.select_nth_unstable_by(head, nearest);
        }
        cands[..head].sort_by(nearest);
        let cat = ds.group(g).0 as usize;
        let mut remaining = want;
        let mut assigned = 0;
        for i in 0..cands.len() {
            if remaining == 0 {
                break;
            }
            if i == head {
                cands[head..].sort_by(nearest);
            }
            let (dist_km, poi) = cands[i];
            let count = remaining.min(ds.poi(poi).total_visits);
            if count == 0 {
                continue;
            }
            remaining -= count;
            assigned += count;
            plan.act_alt[cat] += count;
            plan.dist_alt_km[cat] += count as f64 * dist_km;
            plan.assignments.push(Assignment {
                group: g,
                poi,
                count,
                dist_km,
            });
        }

        let mut out: Vec<(f64, usize, u64)> = flows
            .iter()
            .filter(|f| ds.poi_group(f.poi) == g && !catchment.is_reachable(f.poi))
            .map(|f| (catchment.dist_km(ds, f.poi), f.poi, f.visits))
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (dist_km, origin_poi, visits) in out {
            if assigned == 0 {
                break;
            }
            let count = visits.min(assigned);
            assigned -= count;
            plan.displaced.push(Displacement {
                group: g,
                origin_poi,
                count,
                dist_km,
            });
        }
    }
    plan
}

/// Share of activities inside the catchment or substitutable; `None` when
/// the CBG has no activities.
pub fn pct_act_satisfiable(ledger: &ActivityLedger, plan: &SubstitutionPlan) -> Option<f64> {
    (ledger.act_city > 0).then(|| (ledger.act_within() + plan.act_alt_total()) as f64 / ledger.act_city as f64)
}

// Σ_j (act_alt_j / act_out_j)·dist_out_j, skipping categories with nothing out of reach.
fn prorated_out_km(by_cat: &[CategoryActivity; N_CAT], plan: &SubstitutionPlan) -> f64 {
    by_cat
        .iter()
        .zip(plan.act_alt)
        .filter(|(c, _)| c.act_out > 0)
        .map(|(c, alt)| alt as f64 / c.act_out as f64 * c.dist_out_km)
        .sum()
}

/// Fractional trip-distance reduction from substitution; `None` when the
/// CBG's total trip distance is zero.
pub fn pct_reduced_dist(ds: &CityDataset, ledger: &ActivityLedger, plan: &SubstitutionPlan) -> Option<f64> {
    if ledger.dist_city_km <= 0.0 {
        return None;
    }
    let by_cat = ledger.by_category(ds);
    let alt: f64 = plan.dist_alt_km.iter().sum();
    Some((prorated_out_km(&by_cat, plan) - alt) / ledger.dist_city_km)
}

/// Fractional carbon reduction from substitution, assuming out-of-reach
/// trips are driven and the rest use `mode`; `None` when the baseline
/// emissions are zero.
pub fn pct_reduced_carbon(
    ds: &CityDataset,
    ledger: &ActivityLedger,
    plan: &SubstitutionPlan,
    factors: &EmissionFactors,
    mode: Mode,
) -> Option<f64> {
    let (c_car, c_m) = (factors.car, factors.get(mode));
    let denom = ledger.dist_out_km() * c_car + ledger.dist_within_km() * c_m;
    if denom <= 0.0 {
        return None;
    }
    let by_cat = ledger.by_category(ds);
    let alt: f64 = plan.dist_alt_km.iter().sum();
    Some((prorated_out_km(&by_cat, plan) * c_car - alt * c_m) / denom)
}

pub fn indicators_for(
    ds: &CityDataset,
    catchment: &Catchment,
    factors: &EmissionFactors,
) -> (IndicatorSet, ActivityLedger, SubstitutionPlan) {
    let ledger = build_ledger(ds, catchment);
    let plan = plan_substitution(ds, catchment, &ledger);
    let num_poi = count_accessible_pois(catchment);
    let set = if ledger.act_city == 0 {
        IndicatorSet {
            num_poi,
            pct_act_15min: None,
            pct_act_sat_15min: None,
            pct_reduced_dist: None,
            pct_reduced_carbon: None,
        }
    } else {
        IndicatorSet {
            num_poi,
            pct_act_15min: pct_act_within(&ledger),
            pct_act_sat_15min: pct_act_satisfiable(&ledger, &plan),
            pct_reduced_dist: pct_reduced_dist(ds, &ledger, &plan),
            pct_reduced_carbon: pct_reduced_carbon(ds, &ledger, &plan, factors, catchment.spec.mode),
        }
    };
    (set, ledger, plan)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OverCapacity { poi: usize, assigned: u64, capacity: u64 },
    Unreachable { poi: usize },
    WrongSubcategory { poi: usize },
    Visited { poi: usize },
    OverDemand { group: u32, assigned: u64, act_out: u64 },
}

/// Re-checks every constraint a plan must satisfy.
pub fn audit_plan(
    ds: &CityDataset,
    catchment: &Catchment,
    ledger: &ActivityLedger,
    plan: &SubstitutionPlan,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let flows = ds.flows_of(catchment.cbg);
    let mut per_poi: HashMap<usize, u64> = HashMap::new();
    let mut per_group: HashMap<u32, u64> = HashMap::new();
    for a in &plan.assignments {
        *per_poi.entry(a.poi).or_default() += a.count;
        *per_group.entry(a.group).or_default() += a.count;
        if !catchment.is_reachable(a.poi) {
            out.push(Violation::Unreachable { poi: a.poi });
        }
        if ds.poi_group(a.poi) != a.group {
            out.push(Violation::WrongSubcategory { poi: a.poi });
        }
        if flows.iter().any(|f| f.poi == a.poi) {
            out.push(Violation::Visited { poi: a.poi });
        }
    }
    let mut pois: Vec<_> = per_poi.into_iter().collect();
    pois.sort_unstable();
    for (poi, assigned) in pois {
        let capacity = ds.poi(poi).total_visits;
        if assigned > capacity {
            out.push(Violation::OverCapacity {
                poi,
                assigned,
                capacity,
            });
        }
    }
    let mut groups: Vec<_> = per_group.into_iter().collect();
    groups.sort_unstable();
    for (group, assigned) in groups {
        let act_out = ledger.groups.iter().find(|g| g.group == group).map_or(0, |g| g.act_out);
        if assigned > act_out {
            out.push(Violation::OverDemand {
                group,
                assigned,
                act_out,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorRow {
    pub cbg: usize,
    pub mode: Mode,
    pub budget_min: f64,
    pub act_city: u64,
    pub set: IndicatorSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemFailure {
    pub cbg_id: String,
    pub mode: Mode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeOutput {
    /// Ordered by (CBG id, mode, budget).
    pub rows: Vec<IndicatorRow>,
    pub failures: Vec<ItemFailure>,
    pub warnings: Vec<String>,
    pub capacity_violations: usize,
}

/// Evaluates every (CBG, spec) pair in parallel on the current rayon pool.
/// Catchments, ledgers and plans are dropped as soon as each item is done.
/// Output order does not depend on scheduling.
pub fn compute_all(
    ds: &CityDataset,
    provider: &dyn CatchmentProvider,
    specs: &[CatchmentSpec],
    factors: &EmissionFactors,
) -> ComputeOutput {
    let mut specs = specs.to_vec();
    specs.sort_by(|a, b| a.mode.cmp(&b.mode).then(a.budget_min.total_cmp(&b.budget_min)));
    specs.dedup();
    let n_specs = specs.len();

    enum Item {
        Row(IndicatorRow, Vec<String>, usize),
        Failed(ItemFailure),
    }

    let items: Vec<Item> = (0..ds.cbgs().len() * n_specs)
        .into_par_iter()
        .map(|k| {
            let (cbg, spec) = (k / n_specs, specs[k % n_specs]);
            match provider.catchment(ds, cbg, spec) {
                Ok(c) => {
                    let (set, ledger, plan) = indicators_for(ds, &c, factors);
                    let violations = audit_plan(ds, &c, &ledger, &plan).len();
                    let row = IndicatorRow {
                        cbg,
                        mode: spec.mode,
                        budget_min: spec.budget_min,
                        act_city: ledger.act_city,
                        set,
                    };
                    Item::Row(row, c.warnings, violations)
                }
                Err(e) => Item::Failed(ItemFailure {
                    cbg_id: ds.cbg(cbg).cbg_id.clone(),
                    mode: spec.mode,
                    message: e.to_string(),
                }),
            }
        })
        .collect();

    let mut out = ComputeOutput::default();
    for item in items {
        match item {
            Item::Row(row, warnings, violations) => {
                out.rows.push(row);
                out.warnings.extend(warnings);
                out.capacity_violations += violations;
            }
            Item::Failed(f) => out.failures.push(f),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catchment::{FixedSpeedProvider, ModeSpeeds, DEFAULT_CELL_DEG};
    use crate::dataset::tests::{cbg, flow, poi};
    use crate::dataset::FunctionCategory::{Grocery, Health};
    use crate::dataset::PoiRecord;
    use crate::geo::EARTH_RADIUS_KM;
    use proptest::prelude::*;

    fn lon(km: f64) -> f64 {
        (km / EARTH_RADIUS_KM).to_degrees()
    }

    fn east(id: &str, km: f64, cat: FunctionCategory, sub: &str, cap: u64) -> PoiRecord {
        poi(id, 0.0, lon(km), cat, sub, cap)
    }

    fn eval(ds: &CityDataset, spec: CatchmentSpec) -> (IndicatorSet, ActivityLedger, SubstitutionPlan) {
        let p = FixedSpeedProvider::new(ds, ModeSpeeds::default(), DEFAULT_CELL_DEG).unwrap();
        let c = p.catchment(ds, 0, spec).unwrap();
        indicators_for(ds, &c, &EmissionFactors::default())
    }

    fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() <= tol)
    }

    #[test]
    fn ledger_fixture() {
        // Walk radius 1.25 km: A at 0.5 km is in reach, B at 2 km is not.
        let ds = CityDataset::new(
            "f",
            vec![east("A", 0.5, Grocery, "x", 100), east("B", 2.0, Grocery, "x", 100)],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "A", 10), flow("c", "B", 5)],
        )
        .unwrap();
        let (set, ledger, plan) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        assert_eq!(ledger.act_city, 15);
        assert!((ledger.dist_city_km - 15.0).abs() < 1e-9);
        assert!(close(set.pct_act_15min, 10.0 / 15.0, 1e-9));
        assert!(plan.assignments.is_empty());
        assert_eq!(set.pct_act_sat_15min, set.pct_act_15min);
        assert_eq!(set.pct_reduced_dist, Some(0.0));
        assert_eq!(set.pct_reduced_carbon, Some(0.0));
    }

    #[test]
    fn substitution_is_capped_per_subcategory() {
        // Out of reach: 2 pharmacy + 3 dentist. Alternatives: pharmacy cap 5, dentist cap 1.
        let ds = CityDataset::new(
            "s",
            vec![
                east("far_d", 5.0, Health, "dentist", 100),
                east("far_p", 5.0, Health, "pharmacy", 100),
                east("near_d", 0.5, Health, "dentist", 1),
                east("near_p", 0.5, Health, "pharmacy", 5),
            ],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "far_p", 2), flow("c", "far_d", 3)],
        )
        .unwrap();
        let (set, ledger, plan) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        assert_eq!(plan.act_alt_total(), 3);
        assert!(close(set.pct_act_sat_15min, 0.6, 1e-12));
        let c = Catchment::new(&ds, 0, CatchmentSpec::fifteen_minutes(Mode::Walk), vec![2, 3]);
        assert!(audit_plan(&ds, &c, &ledger, &plan).is_empty());
    }

    #[test]
    fn single_alternative_takes_its_capacity() {
        let ds = CityDataset::new(
            "s",
            vec![east("far", 5.0, Grocery, "x", 100), east("near", 0.5, Grocery, "x", 3)],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "far", 4)],
        )
        .unwrap();
        let (_, _, plan) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        assert_eq!(plan.act_alt_total(), 3);
        assert_eq!(plan.displaced.len(), 1);
        assert_eq!(plan.displaced[0].count, 3);
    }

    #[test]
    fn visited_and_other_subcategory_pois_are_not_alternatives() {
        let ds = CityDataset::new(
            "s",
            vec![
                east("far", 5.0, Grocery, "bakery", 100),
                east("near_other", 0.2, Grocery, "butcher", 100),
                east("near_visited", 0.5, Grocery, "bakery", 100),
            ],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "far", 4), flow("c", "near_visited", 6)],
        )
        .unwrap();
        let (set, _, plan) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        assert_eq!(plan.act_alt_total(), 0);
        assert!(close(set.pct_act_sat_15min, 0.6, 1e-12));
    }

    #[test]
    fn nearest_first_with_id_tie_break() {
        let ds = CityDataset::new(
            "s",
            vec![
                east("a", 0.8, Grocery, "x", 2),
                east("b", 0.3, Grocery, "x", 2),
                east("c", 0.3, Grocery, "x", 2),
                east("far", 5.0, Grocery, "x", 100),
            ],
            vec![cbg("o", 0.0, 0.0)],
            vec![flow("o", "far", 3)],
        )
        .unwrap();
        let (_, _, plan) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        let got: Vec<_> = plan.assignments.iter().map(|a| (a.poi, a.count)).collect();
        assert_eq!(got, vec![(1, 2), (2, 1)]);
    }

    // Cycling, radius 3.75 km: 10 visits at 1 km in reach, 5 at 4 km out of
    // reach, one unvisited alternative at 1 km with capacity 5.
    fn worked_city(alt_cap: u64) -> CityDataset {
        CityDataset::new(
            "w",
            vec![
                east("alt", 1.0, Grocery, "x", alt_cap),
                east("in", 1.0, Grocery, "x", 100),
                east("out", 4.0, Grocery, "x", 100),
            ],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "in", 10), flow("c", "out", 5)],
        )
        .unwrap()
    }

    #[test]
    fn worked_distance_and_carbon_reductions() {
        let (set, ledger, _) = eval(&worked_city(5), CatchmentSpec::fifteen_minutes(Mode::Cycle));
        assert!((ledger.dist_city_km - 30.0).abs() < 1e-9);
        assert!(close(set.pct_reduced_dist, 0.5, 1e-9));
        assert!(close(set.pct_reduced_carbon, 3835.0 / 4150.0, 1e-9));
        assert!(close(set.pct_reduced_carbon, 0.9241, 1e-4));
        assert!(close(set.pct_act_sat_15min, 1.0, 1e-12));
    }

    #[test]
    fn partial_substitution_prorates_out_distance() {
        // act_out 4 over 20 km, 3 substituted at 4/3 km each, dist_city 30.
        let ds = CityDataset::new(
            "p",
            vec![
                east("alt", 4.0 / 3.0, Grocery, "x", 3),
                east("in", 1.0, Grocery, "x", 100),
                east("out", 5.0, Grocery, "x", 100),
            ],
            vec![cbg("c", 0.0, 0.0)],
            vec![flow("c", "in", 10), flow("c", "out", 4)],
        )
        .unwrap();
        let (set, ledger, _) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Cycle));
        assert!((ledger.dist_city_km - 30.0).abs() < 1e-9);
        assert!(close(set.pct_reduced_dist, 11.0 / 30.0, 1e-9));
        assert!(close(set.pct_act_sat_15min, 13.0 / 14.0, 1e-12));
    }

    #[test]
    fn car_with_equal_factors_cancels() {
        let ds = worked_city(5);
        let c = Catchment::new(&ds, 0, CatchmentSpec::fifteen_minutes(Mode::Car), vec![0, 1]);
        let ledger = build_ledger(&ds, &c);
        let plan = plan_substitution(&ds, &c, &ledger);
        // Pretend the alternative is exactly as far as the displaced trips.
        let mut same = plan.clone();
        same.dist_alt_km = [0.0; N_CAT];
        same.dist_alt_km[Grocery as usize] = 20.0;
        let r = pct_reduced_carbon(&ds, &ledger, &same, &EmissionFactors::default(), Mode::Car).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn empty_flows_yield_nulls() {
        let ds = CityDataset::new(
            "e",
            vec![east("a", 0.1, Grocery, "x", 1)],
            vec![cbg("c", 0.0, 0.0)],
            vec![],
        )
        .unwrap();
        let (set, _, _) = eval(&ds, CatchmentSpec::fifteen_minutes(Mode::Walk));
        assert_eq!(set.num_poi, 1);
        assert_eq!(set.pct_act_15min, None);
        assert_eq!(set.pct_reduced_dist, None);
        assert_eq!(set.pct_reduced_carbon, None);
    }

    #[test]
    fn factor_defaults_and_validation() {
        let f = EmissionFactors::default();
        assert_eq!([f.car, f.transit, f.walk, f.cycle], [197.0, 105.0, 26.0, 21.0]);
        assert!(EmissionFactors { walk: -1.0, ..f }.validate().is_err());
    }

    #[test]
    fn compute_all_orders_by_cbg_then_mode() {
        let ds = CityDataset::new(
            "o",
            vec![east("a", 0.1, Grocery, "x", 1)],
            vec![cbg("z", 0.0, 0.0), cbg("a", 0.0, 0.0)],
            vec![flow("z", "a", 1)],
        )
        .unwrap();
        let p = FixedSpeedProvider::new(&ds, ModeSpeeds::default(), DEFAULT_CELL_DEG).unwrap();
        let specs = [
            CatchmentSpec::fifteen_minutes(Mode::Car),
            CatchmentSpec::fifteen_minutes(Mode::Walk),
        ];
        let out = compute_all(&ds, &p, &specs, &EmissionFactors::default());
        let keys: Vec<_> = out
            .rows
            .iter()
            .map(|r| (ds.cbg(r.cbg).cbg_id.as_str(), r.mode))
            .collect();
        assert_eq!(
            keys,
            vec![("a", Mode::Walk), ("a", Mode::Car), ("z", Mode::Walk), ("z", Mode::Car)]
        );
        assert_eq!(out.capacity_violations, 0);
    }

    fn random_city(pois: Vec<(f64, f64, u8, u64)>, flows: Vec<(usize, u64)>, k: u64) -> CityDataset {
        let subs = ["a", "b", "c"];
        let pois: Vec<_> = pois
            .iter()
            .enumerate()
            .map(|(i, &(x, y, s, cap))| {
                poi(
                    &format!("p{i:03}"),
                    lon(y),
                    lon(x),
                    Grocery,
                    subs[s as usize % 3],
                    cap * k,
                )
            })
            .collect();
        let n = pois.len();
        let mut seen = std::collections::BTreeMap::new();
        for (p, v) in flows {
            seen.entry(p % n).or_insert(v * k);
        }
        let flows = seen
            .into_iter()
            .map(|(p, v)| flow("c", &format!("p{p:03}"), v))
            .collect();
        CityDataset::new("r", pois, vec![cbg("c", 0.0, 0.0)], flows).unwrap()
    }

    // POIs as (lat, lon, subcategory, capacity); flows as (poi, visits).
    type CityParts = (Vec<(f64, f64, u8, u64)>, Vec<(usize, u64)>);

    fn arb_city() -> impl Strategy<Value = CityParts> {
        (
            prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0u8..3, 1u64..20), 1..25),
            prop::collection::vec((0usize..100, 1u64..30), 0..15),
        )
    }

    proptest! {
        #[test]
        fn satisfiable_dominates_within((pois, flows) in arb_city(), budget in 1.0..20.0f64) {
            let ds = random_city(pois, flows, 1);
            let p = FixedSpeedProvider::new(&ds, ModeSpeeds::default(), DEFAULT_CELL_DEG).unwrap();
            let c = p.catchment(&ds, 0, CatchmentSpec::new(Mode::Walk, budget).unwrap()).unwrap();
            let (set, ledger, plan) = indicators_for(&ds, &c, &EmissionFactors::default());
            prop_assert!(audit_plan(&ds, &c, &ledger, &plan).is_empty());
            if let (Some(a), Some(s)) = (set.pct_act_15min, set.pct_act_sat_15min) {
                prop_assert!(0.0 <= a && a <= s && s <= 1.0);
            }
            if plan.act_alt_total() > 0 {
                prop_assert!(set.pct_reduced_dist.unwrap() >= -1e-12);
            }
        }

        #[test]
        fn scaling_visits_and_capacities_by_k((pois, flows) in arb_city(), k in 2u64..6) {
            let base = random_city(pois.clone(), flows.clone(), 1);
            let scaled = random_city(pois, flows, k);
            let spec = CatchmentSpec::fifteen_minutes(Mode::Walk);
            let (a, _, _) = eval(&base, spec);
            let (b, _, _) = eval(&scaled, spec);
            match (a.pct_act_15min, b.pct_act_15min) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            match (a.pct_act_sat_15min, b.pct_act_sat_15min) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
