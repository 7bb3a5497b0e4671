//! Rail network, timetable and disturbance types, plus admissible time windows.
//!
//! Times are integer minutes from a per-instance epoch. A train's initial delay
//! is attached to its first route station and propagated forward through the
//! station stay and the minimal passing time of each edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whole minutes.
pub type Minutes = i64;

pub type TrainId = u32;

/// A decision station, identified by its short code (e.g. `"CS"`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Station(pub String);

impl Station {
    pub fn new(code: impl Into<String>) -> Self {
        Station(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Station {
    fn from(s: &str) -> Self {
        Station(s.to_string())
    }
}

/// A directed pair of consecutive stations.
pub type Edge = (Station, Station);

/// Identifies one train at one station.
pub type StopKey = (Station, TrainId);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PassEntry {
    from: Station,
    to: Station,
    minutes: Minutes,
}

mod pass_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<Edge, Minutes>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<PassEntry> = map
            .iter()
            .map(|((from, to), &minutes)| PassEntry {
                from: from.clone(),
                to: to.clone(),
                minutes,
            })
            .collect();
        entries.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<BTreeMap<Edge, Minutes>, D::Error> {
        let entries = Vec::<PassEntry>::deserialize(de)?;
        Ok(entries
            .into_iter()
            .map(|e| ((e.from, e.to), e.minutes))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub headway_min: Minutes,
    pub preparation_min: Minutes,
    pub station_stay_min: Minutes,
    /// Minimal passing time per directed edge.
    #[serde(with = "pass_map")]
    pub pass_min: BTreeMap<Edge, Minutes>,
}

impl NetworkParams {
    pub fn pass_time(&self, from: &Station, to: &Station) -> Result<Minutes> {
        self.pass_min
            .get(&(from.clone(), to.clone()))
            .copied()
            .ok_or_else(|| Error::Config(format!("missing pass_min for edge {from}->{to}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Train {
    pub id: TrainId,
    pub route: Vec<Station>,
    /// Nominal (undisturbed) arrival time at every route station.
    pub nominal_arrivals: BTreeMap<Station, Minutes>,
    #[serde(default)]
    pub initial_delay: Minutes,
}

impl Train {
    pub fn edges(&self) -> impl Iterator<Item = (&Station, &Station)> {
        self.route.windows(2).map(|w| (&w[0], &w[1]))
    }

    pub fn nominal(&self, station: &Station) -> Option<Minutes> {
        self.nominal_arrivals.get(station).copied()
    }

    pub fn serves(&self, station: &Station) -> bool {
        self.route.contains(station)
    }

    pub fn position(&self, station: &Station) -> Option<usize> {
        self.route.iter().position(|s| s == station)
    }

    pub fn first_station(&self) -> Option<&Station> {
        self.route.first()
    }

    pub fn last_station(&self) -> Option<&Station> {
        self.route.last()
    }
}

/// Ordered train pairs per station.
pub type PairSets = BTreeMap<Station, BTreeSet<(TrainId, TrainId)>>;

/// A rescheduling problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub params: NetworkParams,
    pub trains: Vec<Train>,
    pub d_max: Minutes,
    /// Stations whose delays enter the objective.
    pub objective_stations: BTreeSet<Station>,
    /// Same-direction pairs with a headway dependency at each station.
    #[serde(default)]
    pub headway_pairs: PairSets,
    /// Pairs `(j, j')` where `j'` reuses the rolling stock of `j` at the station.
    #[serde(default)]
    pub rollingstock_pairs: PairSets,
    #[serde(default)]
    pub disturbed: bool,
}

impl Instance {
    pub fn train(&self, id: TrainId) -> Option<&Train> {
        self.trains.iter().find(|t| t.id == id)
    }

    /// Every station served by some route.
    pub fn stations(&self) -> BTreeSet<Station> {
        self.trains
            .iter()
            .flat_map(|t| t.route.iter().cloned())
            .collect()
    }

    /// Trains sorted by id, the canonical order used by catalogs and solvers.
    pub fn trains_by_id(&self) -> Vec<&Train> {
        let mut trains: Vec<&Train> = self.trains.iter().collect();
        trains.sort_by_key(|t| t.id);
        trains
    }

    pub fn stop_count(&self) -> usize {
        self.trains.iter().map(|t| t.route.len()).sum()
    }

    /// Canonical JSON rendering: keys sorted, two-space indentation, trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Serde adapter writing a `(station, train)`-keyed map as a list of records.
pub mod stop_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry<T> {
        station: Station,
        train: TrainId,
        value: T,
    }

    pub fn serialize<S, T>(map: &BTreeMap<StopKey, T>, ser: S) -> std::result::Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize + Clone,
    {
        let entries: Vec<Entry<T>> = map
            .iter()
            .map(|((station, train), value)| Entry {
                station: station.clone(),
                train: *train,
                value: value.clone(),
            })
            .collect();
        entries.serialize(ser)
    }

    pub fn deserialize<'de, D, T>(de: D) -> std::result::Result<BTreeMap<StopKey, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de>,
    {
        let entries = Vec::<Entry<T>>::deserialize(de)?;
        Ok(entries
            .into_iter()
            .map(|e| ((e.station, e.train), e.value))
            .collect())
    }
}

/// Admissible arrival windows `[lower, upper]` per (station, train).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimeWindows {
    pub lower: BTreeMap<StopKey, Minutes>,
    pub upper: BTreeMap<StopKey, Minutes>,
}

impl TimeWindows {
    pub fn get(&self, station: &Station, train: TrainId) -> Option<(Minutes, Minutes)> {
        let key = (station.clone(), train);
        Some((*self.lower.get(&key)?, *self.upper.get(&key)?))
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Support and optional weights of the extra passing delay `w` in the stochastic zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceModel {
    pub support: Vec<Minutes>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl DisturbanceModel {
    pub fn new(support: Vec<Minutes>, weights: Option<Vec<f64>>) -> Result<Self> {
        if support.iter().any(|&w| w < 0) {
            return Err(Error::Parameter("disturbance support must be non-negative".into()));
        }
        let distinct: BTreeSet<_> = support.iter().collect();
        if distinct.len() != support.len() {
            return Err(Error::Parameter("disturbance support has repeated values".into()));
        }
        if let Some(ws) = &weights {
            if ws.len() != support.len() {
                return Err(Error::Parameter(format!(
                    "{} weights for {} support values",
                    ws.len(),
                    support.len()
                )));
            }
            if ws.iter().any(|&w| w.is_nan() || w < 0.0) {
                return Err(Error::Parameter("weights must be non-negative".into()));
            }
            let total: f64 = ws.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
            }
        }
        Ok(DisturbanceModel { support, weights })
    }

    /// Uniform weights over the support.
    pub fn uniform(support: Vec<Minutes>) -> Result<Self> {
        let n = support.len().max(1) as f64;
        let weights = vec![1.0 / n; support.len()];
        Self::new(support, Some(weights))
    }

    /// Probability of each support value; uniform when no weights were given.
    pub fn probabilities(&self) -> Vec<(Minutes, f64)> {
        match &self.weights {
            Some(ws) => self.support.iter().copied().zip(ws.iter().copied()).collect(),
            None => {
                let p = 1.0 / self.support.len().max(1) as f64;
                self.support.iter().map(|&w| (w, p)).collect()
            }
        }
    }
}

/// Derives `[l, u]` for every stop.
///
/// `l` of a train's first station is its nominal time plus its initial delay;
/// later stations take the larger of their nominal time and the earliest
/// arrival reachable from the previous lower bound. `u = l + d_max`.
pub fn compute_time_windows(instance: &Instance) -> Result<TimeWindows> {
    let stay = instance.params.station_stay_min;
    let mut windows = TimeWindows::default();
    for train in &instance.trains {
        let mut prev: Option<(&Station, Minutes)> = None;
        for station in &train.route {
            let nominal = train.nominal(station).ok_or_else(|| {
                Error::Config(format!(
                    "train {} has no nominal arrival at {station}",
                    train.id
                ))
            })?;
            let lower = match prev {
                None => nominal + train.initial_delay,
                Some((from, l_prev)) => {
                    let pass = instance.params.pass_time(from, station)?;
                    nominal.max(l_prev + stay + pass)
                }
            };
            let key = (station.clone(), train.id);
            windows.lower.insert(key.clone(), lower);
            windows.upper.insert(key, lower + instance.d_max);
            prev = Some((station, lower));
        }
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    NegativeDelayBound,
    NegativeDuration,
    NegativeInitialDelay,
    EmptyRoute,
    RepeatedStation,
    DuplicateTrainId,
    ArrivalsRouteMismatch,
    NonMonotoneTimetable,
    MissingPassTime,
    UnknownTrainInPair,
    PairStationNotInRoute,
    UnknownObjectiveStation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceViolation {
    pub code: ViolationCode,
    pub message: String,
}

/// Checks every structural invariant of an instance; an empty list means valid.
pub fn validate_instance(instance: &Instance) -> Vec<InstanceViolation> {
    let mut out = Vec::new();
    let mut push = |code, message: String| out.push(InstanceViolation { code, message });

    if instance.d_max < 0 {
        push(
            ViolationCode::NegativeDelayBound,
            format!("d_max = {} is negative", instance.d_max),
        );
    }
    let p = &instance.params;
    for (name, v) in [
        ("headway_min", p.headway_min),
        ("preparation_min", p.preparation_min),
        ("station_stay_min", p.station_stay_min),
    ] {
        if v < 0 {
            push(ViolationCode::NegativeDuration, format!("{name} = {v} is negative"));
        }
    }
    for ((from, to), &m) in &p.pass_min {
        if m < 0 {
            push(
                ViolationCode::NegativeDuration,
                format!("pass_min {from}->{to} = {m} is negative"),
            );
        }
    }

    let mut seen_ids = BTreeSet::new();
    for train in &instance.trains {
        let id = train.id;
        if !seen_ids.insert(id) {
            push(ViolationCode::DuplicateTrainId, format!("train id {id} appears twice"));
        }
        if train.route.is_empty() {
            push(ViolationCode::EmptyRoute, format!("train {id} has an empty route"));
        }
        if train.initial_delay < 0 {
            push(
                ViolationCode::NegativeInitialDelay,
                format!("train {id} has initial delay {}", train.initial_delay),
            );
        }
        let route_set: BTreeSet<&Station> = train.route.iter().collect();
        if route_set.len() != train.route.len() {
            push(
                ViolationCode::RepeatedStation,
                format!("train {id} visits a station more than once"),
            );
        }
        let arrival_set: BTreeSet<&Station> = train.nominal_arrivals.keys().collect();
        if arrival_set != route_set {
            push(
                ViolationCode::ArrivalsRouteMismatch,
                format!("train {id} nominal arrivals do not match its route"),
            );
        }
        for (from, to) in train.edges() {
            if let (Some(a), Some(b)) = (train.nominal(from), train.nominal(to)) {
                if b <= a {
                    push(
                        ViolationCode::NonMonotoneTimetable,
                        format!("train {id} arrives at {to} ({b}) not after {from} ({a})"),
                    );
                }
            }
            if !p.pass_min.contains_key(&(from.clone(), to.clone())) {
                push(
                    ViolationCode::MissingPassTime,
                    format!("no pass_min for edge {from}->{to} used by train {id}"),
                );
            }
        }
    }

    for (label, sets) in [
        ("headway", &instance.headway_pairs),
        ("rolling-stock", &instance.rollingstock_pairs),
    ] {
        for (station, pairs) in sets {
            for &(a, b) in pairs {
                for j in [a, b] {
                    match instance.train(j) {
                        None => push(
                            ViolationCode::UnknownTrainInPair,
                            format!("{label} pair ({a},{b}) at {station} names unknown train {j}"),
                        ),
                        Some(t) if !t.serves(station) => push(
                            ViolationCode::PairStationNotInRoute,
                            format!("{label} pair ({a},{b}): train {j} does not serve {station}"),
                        ),
                        Some(_) => {}
                    }
                }
            }
        }
    }

    let stations = instance.stations();
    for s in &instance.objective_stations {
        if !stations.contains(s) {
            push(
                ViolationCode::UnknownObjectiveStation,
                format!("objective station {s} is not on any route"),
            );
        }
    }
    out
}

/// A same-direction pair whose order flips across a shared edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overtake {
    pub first: TrainId,
    pub second: TrainId,
    pub from: Station,
    pub to: Station,
}

/// Finds train pairs that share a directed edge but arrive at its two ends in
/// opposite orders. Stops without a time are skipped.
pub fn find_overtakes(
    routes: &[(TrainId, Vec<Station>)],
    times: &BTreeMap<StopKey, Minutes>,
) -> Vec<Overtake> {
    let mut by_edge: BTreeMap<Edge, Vec<TrainId>> = BTreeMap::new();
    for (id, route) in routes {
        for w in route.windows(2) {
            by_edge
                .entry((w[0].clone(), w[1].clone()))
                .or_default()
                .push(*id);
        }
    }
    let mut out = Vec::new();
    for ((from, to), trains) in by_edge {
        for (k, &a) in trains.iter().enumerate() {
            for &b in &trains[k + 1..] {
                let get = |s: &Station, j| times.get(&(s.clone(), j)).copied();
                let (Some(a0), Some(b0), Some(a1), Some(b1)) =
                    (get(&from, a), get(&from, b), get(&to, a), get(&to, b))
                else {
                    continue;
                };
                if (a0 - b0).signum() * (a1 - b1).signum() < 0 {
                    let (first, second) = if a0 < b0 { (a, b) } else { (b, a) };
                    out.push(Overtake {
                        first,
                        second,
                        from: from.clone(),
                        to: to.clone(),
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::make_appendix_instance;

    fn st(s: &str) -> Station {
        Station::from(s)
    }

    #[test]
    fn appendix_windows_train_one() {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        assert_eq!(w.get(&st("PS"), 1), Some((19, 21)));
        assert_eq!(w.get(&st("MR"), 1), Some((22, 24)));
        assert_eq!(w.get(&st("CS"), 1), Some((37, 39)));
    }

    #[test]
    fn appendix_windows_train_two() {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        assert_eq!(w.get(&st("CS"), 2), Some((40, 42)));
        assert_eq!(w.get(&st("MR"), 2), Some((55, 57)));
        assert_eq!(w.get(&st("PS"), 2), Some((58, 60)));
    }

    #[test]
    fn undelayed_windows_equal_nominal() {
        let mut inst = make_appendix_instance();
        for t in &mut inst.trains {
            t.initial_delay = 0;
        }
        let w = compute_time_windows(&inst).unwrap();
        for t in &inst.trains {
            for s in &t.route {
                assert_eq!(w.lower[&(s.clone(), t.id)], t.nominal(s).unwrap());
            }
        }
    }

    #[test]
    fn missing_pass_time_names_edge() {
        let mut inst = make_appendix_instance();
        inst.params.pass_min.remove(&(st("MR"), st("CS")));
        let err = compute_time_windows(&inst).unwrap_err();
        assert!(err.to_string().contains("MR->CS"), "{err}");
    }

    #[test]
    fn appendix_instance_is_valid() {
        assert!(validate_instance(&make_appendix_instance()).is_empty());
    }

    #[test]
    fn negative_d_max_flagged() {
        let mut inst = make_appendix_instance();
        inst.d_max = -1;
        let codes: Vec<_> = validate_instance(&inst).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::NegativeDelayBound]);
    }

    #[test]
    fn decreasing_arrivals_flagged() {
        let mut inst = make_appendix_instance();
        inst.trains[0].nominal_arrivals.insert(st("MR"), 10);
        let codes: Vec<_> = validate_instance(&inst).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::NonMonotoneTimetable]);
    }

    #[test]
    fn pair_referencing_unknown_train() {
        let mut inst = make_appendix_instance();
        inst.headway_pairs.entry(st("CS")).or_default().insert((1, 9));
        let codes: Vec<_> = validate_instance(&inst).into_iter().map(|v| v.code).collect();
        assert_eq!(codes, vec![ViolationCode::UnknownTrainInPair]);
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let inst = make_appendix_instance();
        let text = inst.to_json().unwrap();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json().unwrap(), text);
        for key in [
            "params",
            "trains",
            "d_max",
            "objective_stations",
            "headway_pairs",
            "rollingstock_pairs",
        ] {
            assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
        }
    }

    #[test]
    fn disturbance_weights_must_sum_to_one() {
        assert!(DisturbanceModel::new(vec![0, 1], Some(vec![0.5, 0.4])).is_err());
        assert!(DisturbanceModel::new(vec![0, -1], None).is_err());
        let m = DisturbanceModel::new(vec![0, 1, 2], Some(vec![0.5, 0.25, 0.25])).unwrap();
        assert_eq!(m.probabilities()[1], (1, 0.25));
    }

    #[test]
    fn overtake_detected_on_shared_edge() {
        let routes = vec![
            (1, vec![st("MR"), st("CS")]),
            (2, vec![st("MR"), st("CS")]),
        ];
        let mut times = BTreeMap::new();
        times.insert((st("MR"), 1), 10);
        times.insert((st("MR"), 2), 12);
        times.insert((st("CS"), 1), 30);
        times.insert((st("CS"), 2), 27);
        let o = find_overtakes(&routes, &times);
        assert_eq!(o.len(), 1);
        assert_eq!((o[0].first, o[0].second), (1, 2));
        times.insert((st("CS"), 1), 25);
        assert!(find_overtakes(&routes, &times).is_empty());
    }
}
