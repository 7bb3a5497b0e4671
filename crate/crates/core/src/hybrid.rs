//! Hybrid loop: sample the stochastic zone as a QUBO, then complete each
//! representative sub-solution with an exact solve of the remaining network.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{decode, decode_samples, disturbance_distribution, passing_histogram, total_variation, SolutionReport};
use crate::error::{Error, Result};
use crate::ilp::{build_ilp, solve_exact, IlpSolution};
use crate::ising::to_ising;
use crate::network::{compute_time_windows, stop_map, DisturbanceModel, Instance, Minutes, PairSets, Station, StopKey, TimeWindows, Train};
use crate::qubo::{assemble, PenaltyConfig, Qubo};
use crate::samplers::{
    enumerate_spectrum, qaoa_optimize_and_sample, simulated_anneal, AnnealConfig, QaoaConfig, SampleSet,
    DEFAULT_ENUMERATION_CAP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub stochastic: Instance,
    pub deterministic: Instance,
    #[serde(with = "boundary_list")]
    pub boundary: BTreeSet<StopKey>,
}

mod boundary_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Key {
        station: Station,
        train: crate::network::TrainId,
    }

    pub fn serialize<S: Serializer>(set: &BTreeSet<StopKey>, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(set.iter().map(|(station, train)| Key {
            station: station.clone(),
            train: *train,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<BTreeSet<StopKey>, D::Error> {
        let keys: Vec<Key> = Vec::deserialize(de)?;
        Ok(keys.into_iter().map(|k| (k.station, k.train)).collect())
    }
}

/// Sub-train over `route[range]` whose first window matches the full instance.
fn segment(train: &Train, range: std::ops::Range<usize>, windows: &TimeWindows) -> Train {
    let route: Vec<Station> = train.route[range].to_vec();
    let first = &route[0];
    let tau = train.nominal_arrivals[first];
    let lower = windows.get(first, train.id).map(|(l, _)| l).unwrap_or(tau);
    Train {
        id: train.id,
        nominal_arrivals: route.iter().map(|s| (s.clone(), train.nominal_arrivals[s])).collect(),
        route,
        initial_delay: lower - tau,
    }
}

fn restrict_pairs(pairs: &PairSets, keep: impl Fn(&Station) -> bool) -> PairSets {
    pairs
        .iter()
        .filter(|(s, set)| keep(s) && !set.is_empty())
        .map(|(s, set)| (s.clone(), set.clone()))
        .collect()
}

/// Splits an instance along a zone of stations. Zone-internal passing,
/// headway and rolling-stock constraints go to the stochastic part; the rest,
/// plus the boundary stop of every crossing train, go to the deterministic part.
pub fn decompose(instance: &Instance, zone: &BTreeSet<Station>) -> Result<Decomposition> {
    if zone.is_empty() {
        return Err(Error::Decomposition("stochastic zone is empty".into()));
    }
    let stations = instance.stations();
    if let Some(s) = zone.iter().find(|s| !stations.contains(*s)) {
        return Err(Error::Decomposition(format!("zone station {s} is not on any route")));
    }
    let windows = compute_time_windows(instance)?;
    let mut stochastic_trains = Vec::new();
    let mut deterministic_trains = Vec::new();
    let mut boundary = BTreeSet::new();
    for train in &instance.trains {
        let inside: Vec<usize> = (0..train.route.len()).filter(|&i| zone.contains(&train.route[i])).collect();
        let Some((&a, &b)) = inside.first().zip(inside.last()) else {
            deterministic_trains.push(train.clone());
            continue;
        };
        if b - a + 1 != inside.len() {
            return Err(Error::Decomposition(format!(
                "zone is not a contiguous segment of train {}'s route",
                train.id
            )));
        }
        let last = train.route.len() - 1;
        if a > 0 && b < last {
            return Err(Error::Decomposition(format!(
                "zone lies strictly inside train {}'s route; it must touch the first or last station",
                train.id
            )));
        }
        stochastic_trains.push(segment(train, a..b + 1, &windows));
        if a > 0 {
            boundary.insert((train.route[a].clone(), train.id));
            deterministic_trains.push(segment(train, 0..a + 1, &windows));
        } else if b < last {
            boundary.insert((train.route[b].clone(), train.id));
            deterministic_trains.push(segment(train, b..last + 1, &windows));
        }
    }
    let part = |trains: Vec<Train>, in_zone: bool| Instance {
        params: instance.params.clone(),
        trains,
        d_max: instance.d_max,
        objective_stations: instance
            .objective_stations
            .iter()
            .filter(|s| zone.contains(*s) == in_zone)
            .cloned()
            .collect(),
        headway_pairs: restrict_pairs(&instance.headway_pairs, |s| zone.contains(s) == in_zone),
        rollingstock_pairs: restrict_pairs(&instance.rollingstock_pairs, |s| zone.contains(s) == in_zone),
        disturbed: instance.disturbed,
    };
    Ok(Decomposition {
        stochastic: part(stochastic_trains, true),
        deterministic: part(deterministic_trains, false),
        boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerChoice {
    /// Every state of the stochastic QUBO, each counted once.
    Enumerate,
    Anneal(AnnealConfig),
    Qaoa(QaoaConfig),
}

impl SamplerChoice {
    fn doubled(&self) -> Self {
        match self {
            SamplerChoice::Enumerate => SamplerChoice::Enumerate,
            SamplerChoice::Anneal(c) => SamplerChoice::Anneal(AnnealConfig { shots: c.shots * 2, ..c.clone() }),
            SamplerChoice::Qaoa(c) => SamplerChoice::Qaoa(QaoaConfig { shots: c.shots * 2, ..c.clone() }),
        }
    }

    fn reseeded(&self, offset: u64) -> Self {
        match self {
            SamplerChoice::Enumerate => SamplerChoice::Enumerate,
            SamplerChoice::Anneal(c) => SamplerChoice::Anneal(AnnealConfig { seed: c.seed.wrapping_add(offset), ..c.clone() }),
            SamplerChoice::Qaoa(c) => SamplerChoice::Qaoa(QaoaConfig { seed: c.seed.wrapping_add(offset), ..c.clone() }),
        }
    }

    pub fn sample(&self, qubo: &Qubo) -> Result<SampleSet> {
        match self {
            SamplerChoice::Enumerate => {
                let spectrum = enumerate_spectrum(qubo, DEFAULT_ENUMERATION_CAP)?;
                let reads = spectrum.states.iter().map(|s| (spectrum.bits(s), s.energy));
                let meta = BTreeMap::from([("backend".to_string(), "enumerate".to_string())]);
                Ok(SampleSet::from_reads(qubo.n, reads, meta))
            }
            SamplerChoice::Anneal(c) => simulated_anneal(&to_ising(qubo), c),
            SamplerChoice::Qaoa(c) => Ok(qaoa_optimize_and_sample(&to_ising(qubo), c)?.samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub sampler: SamplerChoice,
    pub iterations: usize,
    pub representatives: usize,
    pub penalties: PenaltyConfig,
    /// Reference distribution of extra passing delay in the zone.
    pub disturbance: Option<DisturbanceModel>,
    /// Batches whose passing-time distribution is further than this from
    /// `disturbance` (total variation) are discarded. Off when `None`.
    pub tv_threshold: Option<f64>,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            sampler: SamplerChoice::Enumerate,
            iterations: 5,
            representatives: 3,
            penalties: PenaltyConfig::split(),
            disturbance: None,
            tv_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioEntry {
    pub iteration: usize,
    #[serde(with = "stop_map")]
    pub stochastic_times: BTreeMap<StopKey, Minutes>,
    pub stochastic_objective: f64,
    pub deterministic: IlpSolution,
    #[serde(with = "stop_map")]
    pub joint_times: BTreeMap<StopKey, Minutes>,
    pub joint_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub feasible_samples: u64,
    pub representatives: usize,
    pub best_joint: Option<f64>,
    pub accepted: bool,
    pub retried: bool,
    pub total_variation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridResult {
    pub portfolio: Vec<PortfolioEntry>,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl HybridResult {
    pub fn best(&self) -> Option<&PortfolioEntry> {
        self.portfolio.first()
    }
}

fn boundary_tuple(times: &BTreeMap<StopKey, Minutes>, boundary: &BTreeSet<StopKey>) -> Vec<Minutes> {
    boundary.iter().map(|k| times[k]).collect()
}

/// Zone passing times relative to the minimum, against the disturbance model.
fn batch_tv(reports: &[(SolutionReport, u64)], instance: &Instance, model: &DisturbanceModel) -> Result<Option<f64>> {
    let mut edges = BTreeSet::new();
    for t in &instance.trains {
        for (a, b) in t.edges() {
            edges.insert((a.clone(), b.clone()));
        }
    }
    let mut pooled: BTreeMap<Minutes, u64> = BTreeMap::new();
    for edge in &edges {
        let base = instance.params.pass_time(&edge.0, &edge.1)?;
        for (m, c) in passing_histogram(reports, edge, false).counts {
            *pooled.entry(m - base).or_insert(0) += c;
        }
    }
    let total: u64 = pooled.values().sum();
    if total == 0 {
        return Ok(None);
    }
    let sampled = pooled.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect();
    Ok(Some(total_variation(&sampled, &disturbance_distribution(model, 0))))
}

/// Stochastic sampling plus deterministic completion, iterated until the best
/// joint objective stops improving or the iteration budget runs out.
pub fn run_hybrid(instance: &Instance, zone: &BTreeSet<Station>, config: &HybridConfig) -> Result<HybridResult> {
    if config.iterations == 0 || config.representatives == 0 {
        return Err(Error::Parameter("iterations and representatives must be positive".into()));
    }
    let parts = decompose(instance, zone)?;
    let stoch_windows = compute_time_windows(&parts.stochastic)?;
    let stoch_qubo = assemble(&parts.stochastic, &stoch_windows, &config.penalties)?;
    let det_windows = compute_time_windows(&parts.deterministic)?;
    let det_model = build_ilp(&parts.deterministic, &det_windows, None)?;
    let full_windows = compute_time_windows(instance)?;
    let full_qubo = assemble(instance, &full_windows, &config.penalties)?;

    let mut portfolio: Vec<PortfolioEntry> = Vec::new();
    let mut history = Vec::new();
    let mut seen: BTreeSet<Vec<Minutes>> = BTreeSet::new();
    let mut incumbent: Option<f64> = None;
    let mut converged = false;

    for iteration in 1..=config.iterations {
        let sampler = config.sampler.reseeded(iteration as u64 - 1);
        let mut retried = false;
        let mut reports = decode_samples(&stoch_qubo, &sampler.sample(&stoch_qubo)?)?;
        if !reports.iter().any(|(r, _)| r.feasible_strict) {
            retried = true;
            reports = decode_samples(&stoch_qubo, &sampler.doubled().sample(&stoch_qubo)?)?;
            if !reports.iter().any(|(r, _)| r.feasible_strict) {
                return Err(Error::Hybrid(format!(
                    "iteration {iteration}: no feasible sub-solution in the stochastic zone after doubling shots"
                )));
            }
        }
        let feasible_samples: u64 = reports.iter().filter(|(r, _)| r.feasible_strict).map(|(_, c)| c).sum();
        let tv = match &config.disturbance {
            Some(model) => batch_tv(&reports, &parts.stochastic, model)?,
            None => None,
        };
        if let (Some(limit), Some(d)) = (config.tv_threshold, tv) {
            if d > limit {
                history.push(IterationRecord {
                    iteration,
                    feasible_samples,
                    representatives: 0,
                    best_joint: None,
                    accepted: false,
                    retried,
                    total_variation: tv,
                });
                continue;
            }
        }

        let mut candidates: Vec<(f64, BTreeMap<StopKey, Minutes>)> = reports
            .into_iter()
            .filter(|(r, _)| r.feasible_strict)
            .map(|(r, _)| (r.objective.unwrap_or(0.0), r.defined_times()))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let mut reps = Vec::new();
        for (obj, times) in candidates {
            if reps.len() == config.representatives {
                break;
            }
            if seen.insert(boundary_tuple(&times, &parts.boundary)) {
                reps.push((obj, times));
            }
        }

        let entries: Vec<PortfolioEntry> = reps
            .par_iter()
            .map(|(obj, times)| -> Result<Option<PortfolioEntry>> {
                let mut model = det_model.clone();
                for key in &parts.boundary {
                    if model.fix(&key.0, key.1, times[key]).is_err() {
                        return Ok(None);
                    }
                }
                let det = solve_exact(&model);
                let Some(det_obj) = det.objective_value else {
                    return Ok(None);
                };
                let mut joint = times.clone();
                joint.extend(det.times.iter().map(|(k, v)| (k.clone(), *v)));
                let report = decode(&full_qubo, &full_qubo.catalog.encode(&joint)?)?;
                if !report.feasible_strict {
                    return Ok(None);
                }
                Ok(Some(PortfolioEntry {
                    iteration,
                    stochastic_times: times.clone(),
                    stochastic_objective: *obj,
                    deterministic: det,
                    joint_times: joint,
                    joint_objective: obj + det_obj,
                }))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let best = entries.iter().map(|e| e.joint_objective).min_by(f64::total_cmp);
        let accepted = match (best, incumbent) {
            (Some(b), Some(i)) => b < i,
            (Some(_), None) => true,
            (None, _) => false,
        };
        history.push(IterationRecord {
            iteration,
            feasible_samples,
            representatives: reps.len(),
            best_joint: best,
            accepted,
            retried,
            total_variation: tv,
        });
        portfolio.extend(entries);
        if accepted {
            incumbent = best;
        } else if incumbent.is_some() || reps.is_empty() {
            converged = true;
            break;
        }
    }

    portfolio.sort_by(|a, b| {
        a.joint_objective
            .total_cmp(&b.joint_objective)
            .then(a.iteration.cmp(&b.iteration))
            .then_with(|| a.joint_times.cmp(&b.joint_times))
    });
    Ok(HybridResult {
        portfolio,
        iterations: history.len(),
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::make_appendix_instance;
    use crate::ilp::{solve_instance, ConstraintKind};

    fn st(s: &str) -> Station {
        Station::from(s)
    }

    fn zone(names: &[&str]) -> BTreeSet<Station> {
        names.iter().map(|s| st(s)).collect()
    }

    #[test]
    fn appendix_partition() {
        let inst = make_appendix_instance();
        let d = decompose(&inst, &zone(&["CS", "MR"])).unwrap();
        assert_eq!(d.boundary, BTreeSet::from([(st("MR"), 1), (st("MR"), 2)]));
        let sw = compute_time_windows(&d.stochastic).unwrap();
        let sm = build_ilp(&d.stochastic, &sw, None).unwrap();
        assert_eq!(sm.count(ConstraintKind::Passing), 2);
        assert_eq!(sm.count(ConstraintKind::RollingStock), 1);
        let dw = compute_time_windows(&d.deterministic).unwrap();
        let dm = build_ilp(&d.deterministic, &dw, None).unwrap();
        assert_eq!(dm.count(ConstraintKind::Passing), 2);
        assert_eq!(dm.count(ConstraintKind::RollingStock), 0);
        // windows agree with the full instance
        let full = compute_time_windows(&inst).unwrap();
        assert_eq!(sw.get(&st("MR"), 1), full.get(&st("MR"), 1));
        assert_eq!(dw.get(&st("PS"), 2), full.get(&st("PS"), 2));
        assert!(d.deterministic.objective_stations.is_empty());
    }

    #[test]
    fn zone_edge_cases() {
        let inst = make_appendix_instance();
        let all = decompose(&inst, &zone(&["CS", "MR", "PS"])).unwrap();
        assert!(all.deterministic.trains.is_empty());
        assert!(all.boundary.is_empty());
        assert!(matches!(decompose(&inst, &BTreeSet::new()), Err(Error::Decomposition(_))));
        assert!(matches!(decompose(&inst, &zone(&["CS", "PS"])), Err(Error::Decomposition(_))));
        assert!(matches!(decompose(&inst, &zone(&["MR"])), Err(Error::Decomposition(_))));
    }

    #[test]
    fn enumerator_matches_monolithic() {
        let inst = make_appendix_instance();
        let res = run_hybrid(&inst, &zone(&["CS", "MR"]), &HybridConfig::default()).unwrap();
        let mono = solve_instance(&inst).unwrap().objective_value.unwrap();
        assert_eq!(res.best().unwrap().joint_objective, mono);
        assert!(res.converged);
        assert!(res.portfolio.iter().all(|e| e.joint_objective >= mono));
    }

    #[test]
    fn undisturbed_converges_at_zero() {
        let mut inst = make_appendix_instance();
        inst.trains[0].initial_delay = 0;
        let res = run_hybrid(&inst, &zone(&["CS", "MR"]), &HybridConfig::default()).unwrap();
        assert_eq!(res.best().unwrap().joint_objective, 0.0);
        assert_eq!(res.best().unwrap().iteration, 1);
        assert!(res.converged);
    }

    #[test]
    fn tv_threshold_discards_batches() {
        let inst = make_appendix_instance();
        let cfg = HybridConfig {
            iterations: 2,
            disturbance: Some(DisturbanceModel::uniform(vec![5]).unwrap()),
            tv_threshold: Some(0.5),
            ..Default::default()
        };
        let res = run_hybrid(&inst, &zone(&["CS", "MR"]), &cfg).unwrap();
        assert!(res.portfolio.is_empty());
        assert!(res.history.iter().all(|h| !h.accepted && h.total_variation == Some(1.0)));
    }
}
