//! The reference two-train instance and a seed-reproducible instance family on
//! the three decision stations CS, MR and PS.
//!
//! The family draws from a fixed pool of twelve trains running in alternating
//! directions. Four trains serve all three stations and eight serve two, so
//! the full pool needs 28 stop windows (196 binary variables at `d_max = 6`)
//! and dropping the last two-station train leaves 26 (182 variables).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::solve_instance;
use crate::network::{
    compute_time_windows, Instance, Minutes, NetworkParams, PairSets, Station, Train, TrainId,
};

pub const SUPPORTED_TRAIN_COUNTS: [usize; 8] = [1, 2, 4, 6, 8, 10, 11, 12];
pub const SUPPORTED_D_MAX: [Minutes; 2] = [2, 6];

/// Delay applied to the first pool train of every disturbed instance.
const PRIMARY_DELAY: Minutes = 5;

fn st(code: &str) -> Station {
    Station::from(code)
}

/// Headway 2, preparation 3, stay 1; 14 minutes between CS and MR and 2
/// between MR and PS, in both directions.
pub fn baltimore_params() -> NetworkParams {
    let mut pass_min = BTreeMap::new();
    for (a, b, m) in [("CS", "MR", 14), ("MR", "PS", 2)] {
        pass_min.insert((st(a), st(b)), m);
        pass_min.insert((st(b), st(a)), m);
    }
    NetworkParams {
        headway_min: 2,
        preparation_min: 3,
        station_stay_min: 1,
        pass_min,
    }
}

fn train(id: TrainId, stops: &[(&str, Minutes)], initial_delay: Minutes) -> Train {
    Train {
        id,
        route: stops.iter().map(|(s, _)| st(s)).collect(),
        nominal_arrivals: stops.iter().map(|&(s, t)| (st(s), t)).collect(),
        initial_delay,
    }
}

/// Two trains sharing rolling stock at CS, the southbound one delayed by five
/// minutes, `d_max = 2`.
pub fn make_appendix_instance() -> Instance {
    let mut rollingstock_pairs = PairSets::new();
    rollingstock_pairs.insert(st("CS"), BTreeSet::from([(1, 2)]));
    Instance {
        params: baltimore_params(),
        trains: vec![
            train(1, &[("PS", 14), ("MR", 17), ("CS", 32)], 5),
            train(2, &[("CS", 40), ("MR", 55), ("PS", 58)], 0),
        ],
        d_max: 2,
        objective_stations: BTreeSet::from([st("MR"), st("CS")]),
        headway_pairs: PairSets::new(),
        rollingstock_pairs,
        disturbed: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub train_count: usize,
    pub d_max: Minutes,
    pub disturbed: bool,
    pub seed: u64,
}

impl FamilySpec {
    pub fn new(train_count: usize, d_max: Minutes, disturbed: bool, seed: u64) -> Self {
        FamilySpec {
            train_count,
            d_max,
            disturbed,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_TRAIN_COUNTS.contains(&self.train_count) {
            return Err(Error::Parameter(format!(
                "unsupported train count {} (expected one of {SUPPORTED_TRAIN_COUNTS:?})",
                self.train_count
            )));
        }
        if !SUPPORTED_D_MAX.contains(&self.d_max) {
            return Err(Error::Parameter(format!(
                "unsupported d_max {} (expected one of {SUPPORTED_D_MAX:?})",
                self.d_max
            )));
        }
        if self.train_count == 1 && self.disturbed {
            return Err(Error::Parameter(
                "the single-train instance has no disturbed variant".into(),
            ));
        }
        Ok(())
    }
}

/// Pool trains as (id, stops). Times follow the minimal passing times exactly.
const POOL: [(TrainId, &[(&str, Minutes)]); 12] = [
    (1, &[("PS", 14), ("MR", 17), ("CS", 32)]),
    (2, &[("CS", 40), ("MR", 55), ("PS", 58)]),
    (3, &[("CS", 10), ("MR", 25)]),
    (4, &[("MR", 27), ("CS", 42)]),
    (5, &[("PS", 62), ("MR", 65), ("CS", 80)]),
    (6, &[("CS", 46), ("MR", 61), ("PS", 64)]),
    (7, &[("CS", 20), ("MR", 35)]),
    (8, &[("MR", 29), ("CS", 44)]),
    (9, &[("MR", 70), ("PS", 73)]),
    (10, &[("PS", 77), ("MR", 80)]),
    (11, &[("CS", 50), ("MR", 65)]),
    (12, &[("MR", 85), ("CS", 100)]),
];

/// Terminating train, starting train, station.
const CIRCULATIONS: [(TrainId, TrainId, &str); 7] = [
    (1, 2, "CS"),
    (2, 5, "PS"),
    (4, 6, "CS"),
    (3, 8, "MR"),
    (9, 10, "PS"),
    (7, 9, "MR"),
    (11, 12, "MR"),
];

fn selection(train_count: usize) -> Vec<TrainId> {
    if train_count == 1 {
        vec![3]
    } else {
        POOL.iter().take(train_count).map(|(id, _)| *id).collect()
    }
}

/// Northbound means CS towards PS.
fn northbound(t: &Train) -> bool {
    let rank = |s: &Station| match s.as_str() {
        "CS" => 0,
        "MR" => 1,
        _ => 2,
    };
    rank(&t.route[0]) < rank(&t.route[1])
}

/// Every ordered same-direction pair at each shared station, earlier train first.
fn headway_pairs(trains: &[Train]) -> PairSets {
    let mut out = PairSets::new();
    for (k, a) in trains.iter().enumerate() {
        for b in &trains[k + 1..] {
            if northbound(a) != northbound(b) {
                continue;
            }
            for s in &a.route {
                if let (Some(ta), Some(tb)) = (a.nominal(s), b.nominal(s)) {
                    let pair = if ta <= tb { (a.id, b.id) } else { (b.id, a.id) };
                    out.entry(s.clone()).or_default().insert(pair);
                }
            }
        }
    }
    out
}

/// Number of headway and rolling-stock constraints broken by the earliest
/// admissible timetable.
pub fn count_conflicts(instance: &Instance) -> Result<usize> {
    let w = compute_time_windows(instance)?;
    let p = &instance.params;
    let at = |s: &Station, j: TrainId| w.lower.get(&(s.clone(), j)).copied();
    let mut n = 0;
    for (s, pairs) in &instance.rollingstock_pairs {
        for &(j, k) in pairs {
            if let (Some(a), Some(b)) = (at(s, j), at(s, k)) {
                n += usize::from(b < a + p.preparation_min + p.station_stay_min);
            }
        }
    }
    for (s, pairs) in &instance.headway_pairs {
        for &(j, k) in pairs {
            if let (Some(a), Some(b)) = (at(s, j), at(s, k)) {
                n += usize::from((a - b).abs() < p.headway_min);
            }
        }
    }
    Ok(n)
}

fn target_conflicts(train_count: usize) -> usize {
    match train_count {
        0..=2 => 1,
        3..=10 => 2,
        _ => 3,
    }
}

/// Builds a family member. Deterministic for a fixed `FamilySpec`.
///
/// Disturbed members delay train 1 by five minutes (a rolling-stock conflict
/// at CS) and then add seed-chosen delays of 1 to 5 minutes to other trains,
/// keeping only those that add a conflict while leaving the problem solvable,
/// until the target conflict count is met or the attempt budget runs out.
pub fn make_family_instance(spec: &FamilySpec) -> Result<Instance> {
    spec.validate()?;
    let ids = selection(spec.train_count);
    let trains: Vec<Train> = POOL
        .iter()
        .filter(|(id, _)| ids.contains(id))
        .map(|(id, stops)| train(*id, stops, 0))
        .collect();
    let mut rollingstock_pairs = PairSets::new();
    for (j, k, s) in CIRCULATIONS {
        if ids.contains(&j) && ids.contains(&k) {
            rollingstock_pairs.entry(st(s)).or_default().insert((j, k));
        }
    }
    let mut instance = Instance {
        params: baltimore_params(),
        headway_pairs: headway_pairs(&trains),
        trains,
        d_max: spec.d_max,
        objective_stations: BTreeSet::from([st("MR"), st("CS")]),
        rollingstock_pairs,
        disturbed: spec.disturbed,
    };
    if spec.disturbed {
        disturb(&mut instance, spec)?;
    }
    Ok(instance)
}

fn disturb(instance: &mut Instance, spec: &FamilySpec) -> Result<()> {
    if let Some(t) = instance.trains.iter_mut().find(|t| t.id == 1) {
        t.initial_delay = PRIMARY_DELAY;
    }
    let target = target_conflicts(spec.train_count);
    let mut conflicts = count_conflicts(instance)?;
    let candidates: Vec<TrainId> = instance
        .trains
        .iter()
        .map(|t| t.id)
        .filter(|&id| id != 1)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..64 {
        if conflicts >= target {
            break;
        }
        let Some(&id) = candidates.choose(&mut rng) else {
            break;
        };
        let delay = rng.random_range(1..=PRIMARY_DELAY);
        let mut trial = instance.clone();
        if let Some(t) = trial.trains.iter_mut().find(|t| t.id == id) {
            if t.initial_delay > 0 {
                continue;
            }
            t.initial_delay = delay;
        }
        let c = count_conflicts(&trial)?;
        if c > conflicts && solve_instance(&trial)?.is_optimal() {
            *instance = trial;
            conflicts = c;
        }
    }
    Ok(())
}

/// Every supported family member, disturbed and undisturbed, for one seed.
pub fn family(seed: u64) -> Result<Vec<(FamilySpec, Instance)>> {
    let mut out = Vec::new();
    for &d_max in &SUPPORTED_D_MAX {
        for &n in &SUPPORTED_TRAIN_COUNTS {
            for disturbed in [false, true] {
                let spec = FamilySpec::new(n, d_max, disturbed, seed);
                if spec.validate().is_ok() {
                    out.push((spec, make_family_instance(&spec)?));
                }
            }
        }
    }
    Ok(out)
}
