//! Decoding samples into timetables, feasibility checks, passing-time
//! statistics, spectrum characterisation and scaling fits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{find_overtakes, stop_map, DisturbanceModel, Edge, Instance, Minutes, Station, StopKey, TrainId};
use crate::qubo::{Qubo, Regime, TermTag};
use crate::samplers::{SampleSet, Spectrum};
use crate::textfmt::fmt_g12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    OneHot,
    Passing,
    Headway,
    RollingStock,
    Overtake,
}

impl ViolationKind {
    fn from_tag(tag: TermTag) -> Option<Self> {
        match tag {
            TermTag::Passing => Some(ViolationKind::Passing),
            TermTag::Headway => Some(ViolationKind::Headway),
            TermTag::RollingStock => Some(ViolationKind::RollingStock),
            TermTag::OneHot | TermTag::Objective => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

/// Passing time of one train over one directed edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassingTime {
    pub train: TrainId,
    pub from: Station,
    pub to: Station,
    pub minutes: Minutes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    #[serde(with = "stop_map")]
    pub times: BTreeMap<StopKey, Option<Minutes>>,
    pub feasible_strict: bool,
    pub feasible_relaxed: bool,
    pub violations: Vec<Violation>,
    pub objective: Option<f64>,
    pub passing_times: Vec<PassingTime>,
}

impl SolutionReport {
    pub fn time(&self, station: &Station, train: TrainId) -> Option<Minutes> {
        self.times.get(&(station.clone(), train)).copied().flatten()
    }

    pub fn passing_time(&self, train: TrainId, from: &Station, to: &Station) -> Option<Minutes> {
        self.passing_times
            .iter()
            .find(|p| p.train == train && &p.from == from && &p.to == to)
            .map(|p| p.minutes)
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn defined_times(&self) -> BTreeMap<StopKey, Minutes> {
        self.times
            .iter()
            .filter_map(|(k, t)| t.map(|t| (k.clone(), t)))
            .collect()
    }
}

pub fn decode(qubo: &Qubo, bits: &[u8]) -> Result<SolutionReport> {
    if bits.len() != qubo.n {
        return Err(Error::Parameter(format!(
            "bitstring has {} entries, QUBO has {} variables",
            bits.len(),
            qubo.n
        )));
    }
    let catalog = &qubo.catalog;
    let mut violations = Vec::new();
    let mut times = BTreeMap::new();
    for g in catalog.groups() {
        let on: Vec<usize> = g.indices().filter(|&i| bits[i] == 1).collect();
        let time = match on[..] {
            [i] => Some(g.time_of(i)),
            _ => {
                violations.push(Violation {
                    kind: ViolationKind::OneHot,
                    detail: format!("train {} at {} has {} arrival times set", g.train, g.station, on.len()),
                });
                None
            }
        };
        times.insert((g.station.clone(), g.train), time);
    }

    for ((i, k), tags) in qubo.active_penalties(bits) {
        let (a, b) = (catalog.entry(i), catalog.entry(k));
        for kind in tags.iter().filter_map(|t| ViolationKind::from_tag(*t)) {
            violations.push(Violation {
                kind,
                detail: format!(
                    "train {} at {} t={} conflicts with train {} at {} t={}",
                    a.train, a.station, a.time, b.train, b.station, b.time
                ),
            });
        }
    }

    let routes = catalog.routes();
    let defined: BTreeMap<StopKey, Minutes> = times
        .iter()
        .filter_map(|(k, t): (&StopKey, &Option<Minutes>)| t.map(|t| (k.clone(), t)))
        .collect();
    for o in find_overtakes(&routes, &defined) {
        violations.push(Violation {
            kind: ViolationKind::Overtake,
            detail: format!("train {} overtakes train {} on {}->{}", o.second, o.first, o.from, o.to),
        });
    }

    let mut passing_times = Vec::new();
    for (train, route) in &routes {
        for w in route.windows(2) {
            if let (Some(t0), Some(t1)) = (defined.get(&(w[0].clone(), *train)), defined.get(&(w[1].clone(), *train))) {
                passing_times.push(PassingTime {
                    train: *train,
                    from: w[0].clone(),
                    to: w[1].clone(),
                    minutes: t1 - t0 - qubo.station_stay,
                });
            }
        }
    }

    let one_hot_ok = !violations.iter().any(|v| v.kind == ViolationKind::OneHot);
    let objective = one_hot_ok.then(|| {
        bits.iter()
            .zip(&qubo.objective)
            .filter(|(b, _)| **b == 1)
            .map(|(_, c)| c)
            .sum::<f64>()
    });
    Ok(SolutionReport {
        times,
        feasible_strict: violations.is_empty(),
        feasible_relaxed: violations.iter().all(|v| v.kind == ViolationKind::Passing),
        violations,
        objective,
        passing_times,
    })
}

/// Decodes every distinct sample; each report carries its multiplicity.
pub fn decode_samples(qubo: &Qubo, samples: &SampleSet) -> Result<Vec<(SolutionReport, u64)>> {
    samples
        .samples
        .par_iter()
        .map(|s| decode(qubo, &s.bits).map(|r| (r, s.count)))
        .collect()
}

/// Integer-binned counts (bin width 1).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    pub counts: BTreeMap<Minutes, u64>,
    /// Set when the selection that fed the histogram was empty.
    pub warning: bool,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn mode(&self) -> Option<Minutes> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
    }

    pub fn probabilities(&self) -> BTreeMap<Minutes, f64> {
        let total = self.total() as f64;
        self.counts
            .iter()
            .map(|(k, c)| (*k, if total > 0.0 { *c as f64 / total } else { 0.0 }))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start,count\n");
        for (k, c) in &self.counts {
            let _ = writeln!(out, "{k},{c}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut h = Histogram::default();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (lineno == 1 && line == "bin_start,count") {
                continue;
            }
            let (k, c) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(lineno, "expected `bin_start,count`"))?;
            let k: Minutes = k.trim().parse().map_err(|_| Error::parse(lineno, "bad bin_start"))?;
            let c: u64 = c.trim().parse().map_err(|_| Error::parse(lineno, "bad count"))?;
            *h.counts.entry(k).or_insert(0) += c;
        }
        Ok(h)
    }
}

/// Passing times over `edge` from reports that pass the chosen filter.
pub fn passing_histogram(reports: &[(SolutionReport, u64)], edge: &Edge, relaxed: bool) -> Histogram {
    let mut h = Histogram::default();
    for (r, count) in reports {
        let keep = if relaxed { r.feasible_relaxed } else { r.feasible_strict };
        if !keep {
            continue;
        }
        for p in r.passing_times.iter().filter(|p| p.from == edge.0 && p.to == edge.1) {
            *h.counts.entry(p.minutes).or_insert(0) += count;
        }
    }
    h.warning = h.counts.is_empty();
    h
}

/// `0.5 * sum |p - q|` over the union of supports.
pub fn total_variation(a: &BTreeMap<Minutes, f64>, b: &BTreeMap<Minutes, f64>) -> f64 {
    let keys: BTreeSet<&Minutes> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Distribution of passing times implied by a disturbance model on an edge.
pub fn disturbance_distribution(model: &DisturbanceModel, base: Minutes) -> BTreeMap<Minutes, f64> {
    model.probabilities().into_iter().map(|(w, p)| (base + w, p)).collect()
}

/// Feasibility test on bitmasks, for sweeping a full spectrum.
struct MaskChecker<'a> {
    qubo: &'a Qubo,
    group_masks: Vec<u64>,
    pairs: Vec<u64>,
    routes: Vec<(TrainId, Vec<Station>)>,
    shared_edges: bool,
}

impl<'a> MaskChecker<'a> {
    fn new(qubo: &'a Qubo) -> Self {
        let group_masks = qubo
            .catalog
            .groups()
            .iter()
            .map(|g| g.indices().fold(0u64, |m, i| m | (1 << i)))
            .collect();
        let pairs = qubo
            .provenance
            .iter()
            .filter(|((i, k), tags)| i != k && tags.iter().any(|t| t.is_pair_constraint()))
            .map(|(&(i, k), _)| (1u64 << i) | (1u64 << k))
            .collect();
        let routes = qubo.catalog.routes();
        let mut edges = BTreeSet::new();
        let shared_edges = routes
            .iter()
            .flat_map(|(_, r)| r.windows(2).map(|w| (w[0].clone(), w[1].clone())))
            .any(|e| !edges.insert(e));
        MaskChecker {
            qubo,
            group_masks,
            pairs,
            routes,
            shared_edges,
        }
    }

    fn feasible(&self, mask: u64) -> bool {
        if self.group_masks.iter().any(|g| (mask & g).count_ones() != 1) {
            return false;
        }
        if self.pairs.iter().any(|p| mask & p == *p) {
            return false;
        }
        if self.shared_edges {
            let times: BTreeMap<StopKey, Minutes> = self
                .qubo
                .catalog
                .groups()
                .iter()
                .map(|g| {
                    let i = g.indices().find(|i| mask >> i & 1 == 1).expect("one-hot checked");
                    ((g.station.clone(), g.train), g.time_of(i))
                })
                .collect();
            return find_overtakes(&self.routes, &times).is_empty();
        }
        true
    }

    fn objective(&self, mask: u64) -> f64 {
        self.qubo
            .objective
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, c)| c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBin {
    pub start: f64,
    pub feasible: u64,
    pub infeasible: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub states: usize,
    pub feasible_states: usize,
    pub min_feasible: Option<f64>,
    pub max_feasible: Option<f64>,
    pub min_infeasible: Option<f64>,
    pub gap: Option<f64>,
    pub regime: Regime,
    /// Distinct feasible objective values with their degeneracy.
    pub feasible_levels: Vec<(f64, u64)>,
    pub histogram: Vec<EnergyBin>,
    pub bin_width: f64,
}

/// Classifies every state. With no infeasible states the spectrum counts as split.
pub fn spectrum_summary(spectrum: &Spectrum, qubo: &Qubo, bin_width: f64) -> Result<SpectrumSummary> {
    if spectrum.n != qubo.n {
        return Err(Error::Parameter("spectrum and QUBO sizes differ".into()));
    }
    if bin_width.is_nan() || bin_width <= 0.0 {
        return Err(Error::Parameter("bin width must be positive".into()));
    }
    let checker = MaskChecker::new(qubo);
    let flags: Vec<bool> = spectrum.states.par_iter().map(|s| checker.feasible(s.mask)).collect();

    let mut min_feasible = None;
    let mut max_feasible = None;
    let mut min_infeasible = None;
    let mut levels: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    let mut bins: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    let mut feasible_states = 0;
    for (s, &ok) in spectrum.states.iter().zip(&flags) {
        let bin = (s.energy / bin_width).floor() as i64;
        let slot = bins.entry(bin).or_insert((0, 0));
        if ok {
            feasible_states += 1;
            slot.0 += 1;
            min_feasible.get_or_insert(s.energy);
            max_feasible = Some(s.energy);
            let obj = checker.objective(s.mask);
            levels.entry(fmt_g12(obj)).or_insert((obj, 0)).1 += 1;
        } else {
            slot.1 += 1;
            min_infeasible.get_or_insert(s.energy);
        }
    }
    let gap = match (min_infeasible, max_feasible) {
        (Some(i), Some(f)) => Some(i - f),
        _ => None,
    };
    let regime = match gap {
        Some(g) if g <= 0.0 => Regime::Overlapping,
        _ => Regime::Split,
    };
    let mut feasible_levels: Vec<(f64, u64)> = levels.into_values().collect();
    feasible_levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SpectrumSummary {
        states: spectrum.len(),
        feasible_states,
        min_feasible,
        max_feasible,
        min_infeasible,
        gap,
        regime,
        feasible_levels,
        histogram: bins
            .into_iter()
            .map(|(b, (f, i))| EnergyBin {
                start: b as f64 * bin_width,
                feasible: f,
                infeasible: i,
            })
            .collect(),
        bin_width,
    })
}

/// Count-weighted share of strictly feasible samples.
pub fn feasible_fraction(samples: &SampleSet, qubo: &Qubo) -> Result<f64> {
    let shots = samples.shots();
    if shots == 0 {
        return Ok(0.0);
    }
    let reports = decode_samples(qubo, samples)?;
    let ok: u64 = reports.iter().filter(|(r, _)| r.feasible_strict).map(|(_, c)| c).sum();
    Ok(ok as f64 / shots as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    Linear,
    /// Linear in `ln(value)`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

impl ScalingFit {
    pub fn predict(&self, size: f64) -> f64 {
        let y = self.slope * size + self.intercept;
        match self.model {
            FitModel::Linear => y,
            FitModel::Exponential => y.exp(),
        }
    }
}

/// Least squares on `(size, value)` or `(size, ln value)`. Two points are
/// accepted and interpolated exactly.
pub fn fit_scaling(points: &[(f64, f64)], model: FitModel) -> Result<ScalingFit> {
    if points.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 points, got {}", points.len())));
    }
    let ys: Vec<f64> = match model {
        FitModel::Linear => points.iter().map(|p| p.1).collect(),
        FitModel::Exponential => points
            .iter()
            .map(|&(x, y)| {
                if y > 0.0 {
                    Ok(y.ln())
                } else {
                    Err(Error::Parameter(format!("exponential fit needs positive values, got {y} at {x}")))
                }
            })
            .collect::<Result<_>>()?,
    };
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("fit needs at least two distinct sizes".into()));
    }
    let sxy: f64 = points.iter().zip(&ys).map(|(p, y)| (p.0 - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .zip(&ys)
        .map(|(p, y)| (y - (slope * p.0 + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ScalingFit {
        model,
        slope,
        intercept,
        r2,
        points: points.len(),
    })
}

/// Logical to physical qubit counts observed for two embedded instances.
pub const EMBEDDING_ANCHORS: [(f64, f64); 2] = [(42.0, 85.0), (182.0, 503.0)];

/// Physical-qubit predictions of the anchor fit, rendered to 12 digits.
pub const EMBEDDING_PREDICTIONS: [(f64, &str); 3] = [(6.0, "-22.4857142857"), (42.0, "85"), (196.0, "544.8")];

pub fn embedding_fit() -> ScalingFit {
    fit_scaling(&EMBEDDING_ANCHORS, FitModel::Linear).expect("anchor sizes are distinct")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub train: TrainId,
    pub station: Station,
    pub t_in: Minutes,
    pub t_out: Minutes,
    pub relaxed: bool,
}

/// One row per stop, ordered by train then route position.
pub fn export_train_diagram(report: &SolutionReport, instance: &Instance) -> Result<Vec<DiagramRow>> {
    if !report.feasible_relaxed {
        let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Infeasible(format!("cannot draw an infeasible timetable: {}", list.join("; "))));
    }
    let mut rows = Vec::new();
    for train in instance.trains_by_id() {
        for station in &train.route {
            let t_in = report.time(station, train.id).ok_or_else(|| {
                Error::Infeasible(format!("no arrival for train {} at {station}", train.id))
            })?;
            rows.push(DiagramRow {
                train: train.id,
                station: station.clone(),
                t_in,
                t_out: t_in + instance.params.station_stay_min,
                relaxed: !report.feasible_strict,
            });
        }
    }
    Ok(rows)
}

pub fn diagram_csv(rows: &[DiagramRow]) -> String {
    let mut out = String::from("train,station,t_in,t_out,relaxed\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.train, r.station, r.t_in, r.t_out, u8::from(r.relaxed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::make_appendix_instance;
    use crate::network::compute_time_windows;
    use crate::qubo::{assemble, PenaltyConfig};

    fn st(s: &str) -> Station {
        Station::from(s)
    }

    fn appendix() -> (Instance, Qubo) {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        let q = assemble(&inst, &w, &PenaltyConfig::overlapping()).unwrap();
        (inst, q)
    }

    fn encode(q: &Qubo, stops: &[(&str, TrainId, Minutes)]) -> Vec<u8> {
        let times = stops.iter().map(|&(s, j, t)| ((st(s), j), t)).collect();
        q.catalog.encode(&times).unwrap()
    }

    const OPTIMAL: [(&str, TrainId, Minutes); 6] =
        [("PS", 1, 19), ("MR", 1, 22), ("CS", 1, 37), ("CS", 2, 41), ("MR", 2, 56), ("PS", 2, 59)];

    #[test]
    fn decode_optimal() {
        let (_, q) = appendix();
        let r = decode(&q, &encode(&q, &OPTIMAL)).unwrap();
        assert!(r.feasible_strict && r.feasible_relaxed);
        assert_eq!(r.objective, Some(6.0));
        assert_eq!(r.passing_time(1, &st("MR"), &st("CS")), Some(14));
    }

    #[test]
    fn decode_second_solution() {
        let (_, q) = appendix();
        let bits = encode(&q, &[("PS", 1, 19), ("MR", 1, 22), ("CS", 1, 38), ("CS", 2, 42), ("MR", 2, 57), ("PS", 2, 60)]);
        let r = decode(&q, &bits).unwrap();
        assert!(r.feasible_strict);
        assert_eq!(r.objective, Some(7.5));
        assert_eq!(r.passing_time(2, &st("CS"), &st("MR")), Some(14));
    }

    #[test]
    fn decode_double_bit() {
        let (_, q) = appendix();
        let mut bits = encode(&q, &OPTIMAL);
        bits[1] = 1;
        let r = decode(&q, &bits).unwrap();
        assert!(r.has(ViolationKind::OneHot));
        assert_eq!(r.objective, None);
        assert!(!r.feasible_relaxed);
    }

    #[test]
    fn passing_violation_is_relaxed_feasible() {
        let (_, q) = appendix();
        // MR 24 -> CS 37 leaves a 12 minute passing time
        let bits = encode(&q, &[("PS", 1, 19), ("MR", 1, 24), ("CS", 1, 37), ("CS", 2, 41), ("MR", 2, 56), ("PS", 2, 59)]);
        let r = decode(&q, &bits).unwrap();
        assert!(!r.feasible_strict);
        assert!(r.feasible_relaxed);
        assert_eq!(r.passing_time(1, &st("MR"), &st("CS")), Some(12));
        let h = passing_histogram(&[(r.clone(), 3)], &(st("MR"), st("CS")), true);
        assert_eq!(h.counts, BTreeMap::from([(12, 3)]));
        let h = passing_histogram(&[(r, 3)], &(st("MR"), st("CS")), false);
        assert!(h.warning && h.counts.is_empty());
    }

    #[test]
    fn histogram_csv_and_tv() {
        let h = Histogram { counts: BTreeMap::from([(14, 3), (15, 1)]), warning: false };
        let back = Histogram::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back, h);
        assert_eq!(h.mode(), Some(14));
        let p = h.probabilities();
        assert_eq!(total_variation(&p, &p), 0.0);
        let q = BTreeMap::from([(12, 1.0)]);
        assert_eq!(total_variation(&p, &q), 1.0);
        assert!(Histogram::from_csv("bin_start,count\n3,x\n").is_err());
    }

    #[test]
    fn fits() {
        let lin: Vec<(f64, f64)> = (1..6).map(|x| (x as f64, 2.0 * x as f64 + 3.0)).collect();
        let f = fit_scaling(&lin, FitModel::Linear).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let exp: Vec<(f64, f64)> = [6.0f64, 42.0, 100.0, 182.0].iter().map(|&x| (x, (-0.01 * x).exp())).collect();
        let f = fit_scaling(&exp, FitModel::Exponential).unwrap();
        assert!((f.slope + 0.01).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_scaling(&[(1.0, 0.0), (2.0, 1.0)], FitModel::Exponential).is_err());
        assert!(fit_scaling(&[(1.0, 1.0)], FitModel::Linear).is_err());
    }

    #[test]
    fn embedding_predictions() {
        let f = embedding_fit();
        for (x, want) in EMBEDDING_PREDICTIONS {
            assert_eq!(fmt_g12(f.predict(x)), want);
        }
    }

    #[test]
    fn diagram_rows() {
        let (inst, q) = appendix();
        let r = decode(&q, &encode(&q, &OPTIMAL)).unwrap();
        let rows = export_train_diagram(&r, &inst).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.t_out == r.t_in + 1 && !r.relaxed));
        assert_eq!(rows[3].station, st("CS"));
        let bad = decode(&q, &[0; 18]).unwrap();
        assert!(matches!(export_train_diagram(&bad, &inst), Err(Error::Infeasible(_))));
    }

    #[test]
    fn report_json_round_trip() {
        let (_, q) = appendix();
        let r = decode(&q, &[0; 18]).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: SolutionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
