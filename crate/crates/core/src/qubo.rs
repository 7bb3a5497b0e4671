//! Compilation of an instance into a QUBO over one-hot time variables.
//!
//! `x_{s,j,t} = 1` when train `j` enters station `s` at minute `t`. The matrix
//! is stored upper-triangular and evaluated as
//! `E(x) = sum_{i<k} 2 Q_ik x_i x_k + sum_i Q_ii x_i + offset`, so an
//! off-diagonal coefficient stands for both symmetric entries of the full
//! matrix. Element counts follow the same convention: a diagonal element
//! counts once and an off-diagonal one twice.
//!
//! The `+1` of every one-hot penalty `p_sum (sum_t x_t - 1)^2` is carried in
//! `offset`, so a feasible assignment has energy equal to its objective value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Instance, Minutes, Station, StopKey, TimeWindows, TrainId};
use crate::textfmt::fmt_g12;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarKey {
    pub station: Station,
    pub train: TrainId,
    pub time: Minutes,
}

/// The contiguous block of variables for one (station, train) stop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarGroup {
    pub station: Station,
    pub train: TrainId,
    pub start: usize,
    pub len: usize,
    pub first_time: Minutes,
}

impl VarGroup {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }

    pub fn time_of(&self, index: usize) -> Minutes {
        self.first_time + (index - self.start) as Minutes
    }
}

/// Bijection between flat indices and (station, train, time) triples, ordered
/// by train id, route position, then time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarCatalog {
    entries: Vec<VarKey>,
    groups: Vec<VarGroup>,
    index: HashMap<VarKey, usize>,
    group_of: Vec<usize>,
}

impl VarCatalog {
    pub fn from_entries(entries: Vec<VarKey>) -> Result<Self> {
        let mut groups: Vec<VarGroup> = Vec::new();
        let mut group_of = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::Parameter(format!(
                    "duplicate catalog entry ({}, {}, {})",
                    e.station, e.train, e.time
                )));
            }
            match groups.last_mut() {
                Some(g) if g.station == e.station && g.train == e.train => {
                    if e.time != g.first_time + g.len as Minutes {
                        return Err(Error::Parameter(format!(
                            "catalog times for train {} at {} are not consecutive",
                            e.train, e.station
                        )));
                    }
                    g.len += 1;
                }
                _ => groups.push(VarGroup {
                    station: e.station.clone(),
                    train: e.train,
                    start: i,
                    len: 1,
                    first_time: e.time,
                }),
            }
            group_of.push(groups.len() - 1);
        }
        let keys: BTreeSet<(&Station, TrainId)> =
            groups.iter().map(|g| (&g.station, g.train)).collect();
        if keys.len() != groups.len() {
            return Err(Error::Parameter(
                "catalog splits a (station, train) stop into several blocks".into(),
            ));
        }
        Ok(VarCatalog {
            entries,
            groups,
            index,
            group_of,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VarKey] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &VarKey {
        &self.entries[i]
    }

    pub fn groups(&self) -> &[VarGroup] {
        &self.groups
    }

    pub fn group_index_of(&self, var: usize) -> usize {
        self.group_of[var]
    }

    pub fn index_of(&self, station: &Station, train: TrainId, time: Minutes) -> Option<usize> {
        self.index
            .get(&VarKey {
                station: station.clone(),
                train,
                time,
            })
            .copied()
    }

    pub fn group(&self, station: &Station, train: TrainId) -> Option<&VarGroup> {
        self.groups
            .iter()
            .find(|g| &g.station == station && g.train == train)
    }

    /// Each train's stations in route order, as recorded by the catalog.
    pub fn routes(&self) -> Vec<(TrainId, Vec<Station>)> {
        let mut out: Vec<(TrainId, Vec<Station>)> = Vec::new();
        for g in &self.groups {
            match out.last_mut() {
                Some((id, route)) if *id == g.train => route.push(g.station.clone()),
                _ => out.push((g.train, vec![g.station.clone()])),
            }
        }
        out
    }

    /// One-hot bitstring of a complete timetable.
    pub fn encode(&self, times: &BTreeMap<StopKey, Minutes>) -> Result<Vec<u8>> {
        let mut bits = vec![0u8; self.len()];
        for g in &self.groups {
            let t = times.get(&(g.station.clone(), g.train)).ok_or_else(|| {
                Error::Parameter(format!("no time for train {} at {}", g.train, g.station))
            })?;
            let i = self.index_of(&g.station, g.train, *t).ok_or_else(|| {
                Error::Parameter(format!(
                    "time {t} outside the window of train {} at {}",
                    g.train, g.station
                ))
            })?;
            bits[i] = 1;
        }
        Ok(bits)
    }

    /// Sidecar listing: `index station train time` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {} {}", e.station, e.train, e.time);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [idx, station, train, time] = fields[..] else {
                return Err(Error::parse(lineno + 1, "expected `index station train time`"));
            };
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno + 1, "bad index"))?;
            if idx != entries.len() {
                return Err(Error::parse(lineno + 1, "indices must be consecutive from 0"));
            }
            entries.push(VarKey {
                station: Station::from(station),
                train: train
                    .parse()
                    .map_err(|_| Error::parse(lineno + 1, "bad train id"))?,
                time: time
                    .parse()
                    .map_err(|_| Error::parse(lineno + 1, "bad time"))?,
            });
        }
        Self::from_entries(entries)
    }
}

/// Variables for every stop and every minute of its window.
pub fn build_catalog(instance: &Instance, windows: &TimeWindows) -> Result<VarCatalog> {
    let mut entries = Vec::new();
    for train in instance.trains_by_id() {
        for station in &train.route {
            let (l, u) = windows.get(station, train.id).ok_or_else(|| {
                Error::Config(format!("no time window for train {} at {station}", train.id))
            })?;
            entries.extend((l..=u).map(|time| VarKey {
                station: station.clone(),
                train: train.id,
                time,
            }));
        }
    }
    VarCatalog::from_entries(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Overlapping,
    Split,
    Custom,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Overlapping => "overlapping",
            Regime::Split => "split",
            Regime::Custom => "custom",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlapping" => Ok(Regime::Overlapping),
            "split" => Ok(Regime::Split),
            "custom" => Ok(Regime::Custom),
            other => Err(Error::Parameter(format!("unknown penalty regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub p_sum: f64,
    pub p_pair: f64,
    pub regime_label: Regime,
    /// Optional per-family replacements for `p_pair`.
    #[serde(default)]
    pub passing: Option<f64>,
    #[serde(default)]
    pub headway: Option<f64>,
    #[serde(default)]
    pub rolling_stock: Option<f64>,
}

impl PenaltyConfig {
    /// `p_sum = 4`, `p_pair = 2`: feasible and infeasible energies interleave.
    pub fn overlapping() -> Self {
        Self::labelled(4.0, 2.0, Regime::Overlapping)
    }

    /// `p_sum = 40`, `p_pair = 20`: an energy gap separates feasible states.
    pub fn split() -> Self {
        Self::labelled(40.0, 20.0, Regime::Split)
    }

    pub fn custom(p_sum: f64, p_pair: f64) -> Result<Self> {
        let cfg = Self::labelled(p_sum, p_pair, Regime::Custom);
        cfg.validate()?;
        Ok(cfg)
    }

    fn labelled(p_sum: f64, p_pair: f64, regime_label: Regime) -> Self {
        PenaltyConfig {
            p_sum,
            p_pair,
            regime_label,
            passing: None,
            headway: None,
            rolling_stock: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [Some(self.p_sum), Some(self.p_pair), self.passing, self.headway, self.rolling_stock];
        if all.iter().flatten().all(|&p| p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Parameter("penalties must be positive and finite".into()))
        }
    }

    /// Both base penalties multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        PenaltyConfig {
            p_sum: self.p_sum * factor,
            p_pair: self.p_pair * factor,
            regime_label: Regime::Custom,
            passing: self.passing.map(|p| p * factor),
            headway: self.headway.map(|p| p * factor),
            rolling_stock: self.rolling_stock.map(|p| p * factor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermTag {
    OneHot,
    Passing,
    Headway,
    RollingStock,
    Objective,
}

impl TermTag {
    pub fn as_str(self) -> &'static str {
        match self {
            TermTag::OneHot => "onehot",
            TermTag::Passing => "passing",
            TermTag::Headway => "headway",
            TermTag::RollingStock => "rollingstock",
            TermTag::Objective => "objective",
        }
    }

    pub fn is_pair_constraint(self) -> bool {
        matches!(self, TermTag::Passing | TermTag::Headway | TermTag::RollingStock)
    }
}

impl FromStr for TermTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "onehot" => TermTag::OneHot,
            "passing" => TermTag::Passing,
            "headway" => TermTag::Headway,
            "rollingstock" => TermTag::RollingStock,
            "objective" => TermTag::Objective,
            other => return Err(Error::Parameter(format!("unknown term tag `{other}`"))),
        })
    }
}

/// Output of one encoder: upper-triangular `(i, k, coeff)` with `i <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermSet {
    pub tag: TermTag,
    pub entries: Vec<(usize, usize, f64)>,
    pub offset: f64,
}

impl TermSet {
    fn new(tag: TermTag) -> Self {
        TermSet {
            tag,
            entries: Vec::new(),
            offset: 0.0,
        }
    }

    fn add(&mut self, a: usize, b: usize, c: f64) {
        let (i, k) = if a <= b { (a, b) } else { (b, a) };
        self.entries.push((i, k, c));
    }

    /// Elements of the full symmetric matrix touched by this set.
    pub fn element_count(&self) -> usize {
        element_count(self.merged().iter().map(|(&k, &c)| (k, c)))
    }

    fn merged(&self) -> BTreeMap<(usize, usize), f64> {
        let mut m = BTreeMap::new();
        for &(i, k, c) in &self.entries {
            *m.entry((i, k)).or_insert(0.0) += c;
        }
        m
    }
}

fn element_count(it: impl Iterator<Item = ((usize, usize), f64)>) -> usize {
    it.filter(|(_, c)| *c != 0.0)
        .map(|((i, k), _)| if i == k { 1 } else { 2 })
        .sum()
}

/// `p_sum (sum_t x_t - 1)^2` per stop, expanded with `x^2 = x`.
pub fn encode_one_hot(catalog: &VarCatalog, p_sum: f64) -> TermSet {
    let mut ts = TermSet::new(TermTag::OneHot);
    for g in catalog.groups() {
        for a in g.indices() {
            ts.add(a, a, -p_sum);
            for b in a + 1..g.start + g.len {
                ts.add(a, b, p_sum);
            }
        }
        ts.offset += p_sum;
    }
    ts
}

/// Penalises arriving at the next station sooner than stay plus minimal passing time.
pub fn encode_passing(catalog: &VarCatalog, instance: &Instance, p_pair: f64) -> Result<TermSet> {
    let mut ts = TermSet::new(TermTag::Passing);
    let stay = instance.params.station_stay_min;
    for train in instance.trains_by_id() {
        for (from, to) in train.edges() {
            let gap = stay + instance.params.pass_time(from, to)?;
            let (Some(g0), Some(g1)) = (catalog.group(from, train.id), catalog.group(to, train.id))
            else {
                continue;
            };
            for a in g0.indices() {
                let t = g0.time_of(a);
                for b in g1.indices() {
                    if g1.time_of(b) < t + gap {
                        ts.add(a, b, p_pair);
                    }
                }
            }
        }
    }
    Ok(ts)
}

/// Penalises same-direction arrivals closer than the headway.
pub fn encode_headway(catalog: &VarCatalog, instance: &Instance, p_pair: f64) -> TermSet {
    let mut ts = TermSet::new(TermTag::Headway);
    let h = instance.params.headway_min;
    for (station, pairs) in &instance.headway_pairs {
        for &(j, k) in pairs {
            let (Some(g0), Some(g1)) = (catalog.group(station, j), catalog.group(station, k)) else {
                continue;
            };
            for a in g0.indices() {
                let t = g0.time_of(a);
                for b in g1.indices() {
                    let u = g1.time_of(b);
                    if t - h < u && u < t + h {
                        ts.add(a, b, p_pair);
                    }
                }
            }
        }
    }
    ts
}

/// Penalises a departure on shared rolling stock before preparation plus stay has elapsed.
pub fn encode_rollingstock(catalog: &VarCatalog, instance: &Instance, p_pair: f64) -> TermSet {
    let mut ts = TermSet::new(TermTag::RollingStock);
    let gap = instance.params.preparation_min + instance.params.station_stay_min;
    for (station, pairs) in &instance.rollingstock_pairs {
        for &(j, k) in pairs {
            let (Some(g0), Some(g1)) = (catalog.group(station, j), catalog.group(station, k)) else {
                continue;
            };
            for a in g0.indices() {
                let t = g0.time_of(a);
                for b in g1.indices() {
                    if g1.time_of(b) < t + gap {
                        ts.add(a, b, p_pair);
                    }
                }
            }
        }
    }
    ts
}

/// Diagonal `(t - tau) / d_max` for stops at objective stations.
pub fn encode_objective(catalog: &VarCatalog, instance: &Instance) -> Result<TermSet> {
    if instance.d_max <= 0 {
        return Err(Error::Parameter(format!(
            "objective needs d_max > 0, got {}",
            instance.d_max
        )));
    }
    let d = instance.d_max as f64;
    let mut ts = TermSet::new(TermTag::Objective);
    for g in catalog.groups() {
        if !instance.objective_stations.contains(&g.station) {
            continue;
        }
        let nominal = instance
            .train(g.train)
            .and_then(|t| t.nominal(&g.station))
            .ok_or_else(|| {
                Error::Config(format!("no nominal time for train {} at {}", g.train, g.station))
            })?;
        for i in g.indices() {
            let c = (g.time_of(i) - nominal) as f64 / d;
            if c != 0.0 {
                ts.add(i, i, c);
            }
        }
    }
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ElementCounts {
    pub one_hot: usize,
    pub passing: usize,
    pub headway: usize,
    pub rolling_stock: usize,
    /// Constraint elements before the objective is merged in.
    pub constraints: usize,
    /// Non-zero elements of the final matrix.
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    pub n: usize,
    pub terms: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
    pub catalog: VarCatalog,
    pub provenance: BTreeMap<(usize, usize), BTreeSet<TermTag>>,
    /// Linear objective coefficient per variable.
    pub objective: Vec<f64>,
    pub penalties: PenaltyConfig,
    pub station_stay: Minutes,
    pub counts: ElementCounts,
}

pub fn assemble(instance: &Instance, windows: &TimeWindows, penalties: &PenaltyConfig) -> Result<Qubo> {
    penalties.validate()?;
    let catalog = build_catalog(instance, windows)?;
    let p = penalties;
    let one_hot = encode_one_hot(&catalog, p.p_sum);
    let passing = encode_passing(&catalog, instance, p.passing.unwrap_or(p.p_pair))?;
    let headway = encode_headway(&catalog, instance, p.headway.unwrap_or(p.p_pair));
    let rolling = encode_rollingstock(&catalog, instance, p.rolling_stock.unwrap_or(p.p_pair));
    let objective = encode_objective(&catalog, instance)?;

    let constraint_sets = [&one_hot, &passing, &headway, &rolling];
    let mut constraint_matrix: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ts in constraint_sets {
        for &(i, k, c) in &ts.entries {
            *constraint_matrix.entry((i, k)).or_insert(0.0) += c;
        }
    }
    let counts = ElementCounts {
        one_hot: one_hot.element_count(),
        passing: passing.element_count(),
        headway: headway.element_count(),
        rolling_stock: rolling.element_count(),
        constraints: element_count(constraint_matrix.iter().map(|(&k, &c)| (k, c))),
        total: 0,
    };

    let mut objective_coeffs = vec![0.0; catalog.len()];
    for &(i, _, c) in &objective.entries {
        objective_coeffs[i] += c;
    }
    let mut qubo = Qubo::with_catalog(catalog, *penalties, instance.params.station_stay_min);
    qubo.objective = objective_coeffs;
    for ts in constraint_sets.into_iter().chain([&objective]) {
        qubo.add_terms(ts);
    }
    qubo.counts = ElementCounts {
        total: qubo.nonzero_elements(),
        ..counts
    };
    Ok(qubo)
}

impl Qubo {
    fn with_catalog(catalog: VarCatalog, penalties: PenaltyConfig, station_stay: Minutes) -> Self {
        Qubo {
            n: catalog.len(),
            terms: BTreeMap::new(),
            offset: 0.0,
            objective: vec![0.0; catalog.len()],
            catalog,
            provenance: BTreeMap::new(),
            penalties,
            station_stay,
            counts: ElementCounts::default(),
        }
    }

    /// A bare quadratic form with no catalog, for samplers and tests.
    pub fn from_terms(n: usize, entries: &[(usize, usize, f64)], offset: f64) -> Result<Self> {
        let mut qubo = Qubo::with_catalog(VarCatalog::default(), PenaltyConfig::overlapping(), 0);
        qubo.n = n;
        qubo.objective = vec![0.0; n];
        for &(a, b, c) in entries {
            if a >= n || b >= n {
                return Err(Error::Parameter(format!("index ({a}, {b}) out of range for {n} variables")));
            }
            if !c.is_finite() {
                return Err(Error::Parameter("non-finite coefficient".into()));
            }
            let key = (a.min(b), a.max(b));
            *qubo.terms.entry(key).or_insert(0.0) += c;
        }
        qubo.terms.retain(|_, c| *c != 0.0);
        qubo.offset = offset;
        qubo.counts.total = qubo.nonzero_elements();
        Ok(qubo)
    }

    fn add_terms(&mut self, ts: &TermSet) {
        for &(i, k, c) in &ts.entries {
            *self.terms.entry((i, k)).or_insert(0.0) += c;
            self.provenance.entry((i, k)).or_default().insert(ts.tag);
        }
        self.terms.retain(|_, c| *c != 0.0);
        self.offset += ts.offset;
    }

    pub fn nonzero_elements(&self) -> usize {
        element_count(self.terms.iter().map(|(&k, &c)| (k, c)))
    }

    pub fn coefficient(&self, i: usize, k: usize) -> f64 {
        self.terms.get(&(i.min(k), i.max(k))).copied().unwrap_or(0.0)
    }

    pub fn evaluate(&self, bits: &[u8]) -> Result<f64> {
        if bits.len() != self.n {
            return Err(Error::Parameter(format!(
                "bitstring has {} entries, QUBO has {} variables",
                bits.len(),
                self.n
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Parameter("bits must be 0 or 1".into()));
        }
        Ok(self.evaluate_unchecked(bits))
    }

    pub(crate) fn evaluate_unchecked(&self, bits: &[u8]) -> f64 {
        let mut e = self.offset;
        for (&(i, k), &c) in &self.terms {
            if bits[i] == 1 && bits[k] == 1 {
                e += if i == k { c } else { 2.0 * c };
            }
        }
        e
    }

    /// Active pair-constraint elements, each with the families it belongs to.
    pub fn active_penalties<'a>(
        &'a self,
        bits: &'a [u8],
    ) -> impl Iterator<Item = ((usize, usize), &'a BTreeSet<TermTag>)> + 'a {
        self.provenance.iter().filter_map(move |(&(i, k), tags)| {
            (i != k && bits[i] == 1 && bits[k] == 1 && tags.iter().any(|t| t.is_pair_constraint()))
                .then_some(((i, k), tags))
        })
    }

    /// Neighbour lists with doubled off-diagonal weights, used by the enumerator.
    pub(crate) fn dense(&self) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let mut diag = vec![0.0; self.n];
        let mut nbrs = vec![Vec::new(); self.n];
        for (&(i, k), &c) in &self.terms {
            if i == k {
                diag[i] += c;
            } else {
                nbrs[i].push((k, 2.0 * c));
                nbrs[k].push((i, 2.0 * c));
            }
        }
        (diag, nbrs)
    }

    /// Number of distinct variable pairs with a non-zero coefficient.
    pub fn coupling_count(&self) -> usize {
        self.terms.keys().filter(|(i, k)| i != k).count()
    }

    /// QUBO file: `nvars N offset F`, metadata comments, then `i k coeff tag` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nvars {} offset {}", self.n, fmt_g12(self.offset));
        let p = &self.penalties;
        let _ = writeln!(
            out,
            "# penalties {} p_sum {} p_pair {}",
            p.regime_label,
            fmt_g12(p.p_sum),
            fmt_g12(p.p_pair)
        );
        let _ = writeln!(out, "# station_stay {}", self.station_stay);
        let c = &self.counts;
        let _ = writeln!(
            out,
            "# elements one_hot {} passing {} headway {} rolling_stock {} constraints {}",
            c.one_hot, c.passing, c.headway, c.rolling_stock, c.constraints
        );
        let mut keys: BTreeSet<(usize, usize)> = self.terms.keys().copied().collect();
        keys.extend(self.provenance.keys().copied());
        for (i, k) in keys {
            let tag = self
                .provenance
                .get(&(i, k))
                .map(|tags| tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("+"))
                .unwrap_or_else(|| "custom".to_string());
            let _ = writeln!(out, "{i} {k} {} {tag}", fmt_g12(self.coefficient(i, k)));
        }
        out
    }

    /// Parses a QUBO file and, when given, its catalog sidecar.
    pub fn from_text(text: &str, catalog: Option<&str>) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty QUBO file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let (n, offset) = match h[..] {
            ["nvars", n, "offset", f] => (
                n.parse::<usize>().map_err(|_| Error::parse(1, "bad nvars"))?,
                f.parse::<f64>().map_err(|_| Error::parse(1, "bad offset"))?,
            ),
            _ => return Err(Error::parse(1, "expected `nvars N offset F`")),
        };
        let catalog = match catalog {
            Some(c) => VarCatalog::from_text(c)?,
            None => VarCatalog::default(),
        };
        if !catalog.is_empty() && catalog.len() != n {
            return Err(Error::Parameter(format!(
                "catalog lists {} variables, QUBO header says {n}",
                catalog.len()
            )));
        }
        let mut penalties = PenaltyConfig::overlapping();
        let mut station_stay = 0;
        let mut qubo = Qubo::with_catalog(catalog, penalties, 0);
        qubo.n = n;
        qubo.offset = offset;
        qubo.objective = vec![0.0; n];
        for (lineno, line) in lines {
            let lineno = lineno + 1;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "#" {
                match f[1..] {
                    ["penalties", regime, "p_sum", ps, "p_pair", pp] => {
                        penalties = PenaltyConfig {
                            regime_label: regime.parse()?,
                            p_sum: ps.parse().map_err(|_| Error::parse(lineno, "bad p_sum"))?,
                            p_pair: pp.parse().map_err(|_| Error::parse(lineno, "bad p_pair"))?,
                            ..PenaltyConfig::overlapping()
                        };
                    }
                    ["station_stay", s] => {
                        station_stay = s.parse().map_err(|_| Error::parse(lineno, "bad station_stay"))?;
                    }
                    ["elements", "one_hot", a, "passing", b, "headway", c, "rolling_stock", d, "constraints", e] => {
                        let num = |v: &str| v.parse::<usize>().map_err(|_| Error::parse(lineno, "bad element count"));
                        qubo.counts = ElementCounts {
                            one_hot: num(a)?,
                            passing: num(b)?,
                            headway: num(c)?,
                            rolling_stock: num(d)?,
                            constraints: num(e)?,
                            total: 0,
                        };
                    }
                    _ => {}
                }
                continue;
            }
            let [i, k, c, tag] = f[..] else {
                return Err(Error::parse(lineno, "expected `i k coeff tag`"));
            };
            let i: usize = i.parse().map_err(|_| Error::parse(lineno, "bad index"))?;
            let k: usize = k.parse().map_err(|_| Error::parse(lineno, "bad index"))?;
            let c: f64 = c.parse().map_err(|_| Error::parse(lineno, "bad coefficient"))?;
            if i > k || k >= n {
                return Err(Error::parse(lineno, "indices must satisfy i <= k < nvars"));
            }
            if c != 0.0 {
                qubo.terms.insert((i, k), c);
            }
            if tag != "custom" {
                let tags = tag
                    .split('+')
                    .map(TermTag::from_str)
                    .collect::<Result<BTreeSet<_>>>()
                    .map_err(|e| Error::parse(lineno, e.to_string()))?;
                qubo.provenance.insert((i, k), tags);
            }
        }
        for (&(i, k), tags) in &qubo.provenance {
            if i == k && tags.contains(&TermTag::Objective) {
                let one_hot = if tags.contains(&TermTag::OneHot) { penalties.p_sum } else { 0.0 };
                qubo.objective[i] = qubo.coefficient(i, i) + one_hot;
            }
        }
        qubo.penalties = penalties;
        qubo.station_stay = station_stay;
        qubo.counts.total = qubo.nonzero_elements();
        Ok(qubo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::make_appendix_instance;
    use crate::network::{compute_time_windows, Train};

    fn st(s: &str) -> Station {
        Station::from(s)
    }

    fn appendix(p: PenaltyConfig) -> (Instance, Qubo) {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        let q = assemble(&inst, &w, &p).unwrap();
        (inst, q)
    }

    fn bits_for(q: &Qubo, stops: &[(&str, TrainId, Minutes)]) -> Vec<u8> {
        let times = stops.iter().map(|&(s, j, t)| ((st(s), j), t)).collect();
        q.catalog.encode(&times).unwrap()
    }

    const OPTIMAL: [(&str, TrainId, Minutes); 6] = [
        ("PS", 1, 19),
        ("MR", 1, 22),
        ("CS", 1, 37),
        ("CS", 2, 41),
        ("MR", 2, 56),
        ("PS", 2, 59),
    ];

    #[test]
    fn catalog_order_and_size() {
        let (_, q) = appendix(PenaltyConfig::overlapping());
        assert_eq!(q.n, 18);
        assert_eq!(q.catalog.entry(0), &VarKey { station: st("PS"), train: 1, time: 19 });
        assert_eq!(q.catalog.entry(9), &VarKey { station: st("CS"), train: 2, time: 40 });
        assert_eq!(q.catalog.groups().len(), 6);
    }

    #[test]
    fn appendix_element_counts() {
        let (_, q) = appendix(PenaltyConfig::overlapping());
        assert_eq!(q.counts.one_hot, 54);
        assert_eq!(q.counts.passing, 24);
        assert_eq!(q.counts.rolling_stock, 12);
        assert_eq!(q.counts.headway, 0);
        assert_eq!(q.counts.constraints, 90);
        // objective diagonals merge into one-hot diagonals
        assert_eq!(q.counts.total, 90);
    }

    #[test]
    fn passing_pairs_for_train_one_ps_to_mr() {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        let cat = build_catalog(&inst, &w).unwrap();
        let ts = encode_passing(&cat, &inst, 1.0).unwrap();
        let mut pairs: Vec<(Minutes, Minutes)> = ts
            .entries
            .iter()
            .filter(|(i, _, _)| cat.entry(*i).train == 1 && cat.entry(*i).station == st("PS"))
            .map(|&(i, k, _)| (cat.entry(i).time, cat.entry(k).time))
            .collect();
        pairs.sort();
        assert_eq!(pairs, vec![(20, 22), (21, 22), (21, 23)]);
    }

    #[test]
    fn rolling_stock_pairs_at_cs() {
        let inst = make_appendix_instance();
        let w = compute_time_windows(&inst).unwrap();
        let cat = build_catalog(&inst, &w).unwrap();
        let ts = encode_rollingstock(&cat, &inst, 1.0);
        let mut pairs: Vec<(Minutes, Minutes)> = ts
            .entries
            .iter()
            .map(|&(i, k, _)| (cat.entry(i).time, cat.entry(k).time))
            .collect();
        pairs.sort();
        assert_eq!(pairs, vec![(37, 40), (38, 40), (38, 41), (39, 40), (39, 41), (39, 42)]);
        assert_eq!(ts.element_count(), 12);
    }

    #[test]
    fn headway_grid_and_zero_headway() {
        let mut inst = make_appendix_instance();
        // make train 2 a second southbound train with an identical window at MR
        inst.trains[1] = Train {
            id: 2,
            route: vec![st("MR")],
            nominal_arrivals: BTreeMap::from([(st("MR"), 22)]),
            initial_delay: 0,
        };
        inst.rollingstock_pairs.clear();
        inst.headway_pairs.insert(st("MR"), BTreeSet::from([(1, 2)]));
        let w = compute_time_windows(&inst).unwrap();
        let cat = build_catalog(&inst, &w).unwrap();
        // |t - t'| < 2 over the 3x3 grid {22,23,24}^2
        let ts = encode_headway(&cat, &inst, 1.0);
        assert_eq!(ts.entries.len(), 7);
        let brute = (22..=24)
            .flat_map(|a: Minutes| (22..=24).map(move |b: Minutes| (a - b).abs() < 2))
            .filter(|&x| x)
            .count();
        assert_eq!(brute, 7);
        inst.params.headway_min = 0;
        assert!(encode_headway(&cat, &inst, 1.0).entries.is_empty());
    }

    #[test]
    fn single_variable_group() {
        let cat = VarCatalog::from_entries(vec![VarKey { station: st("CS"), train: 1, time: 5 }]).unwrap();
        let ts = encode_one_hot(&cat, 4.0);
        assert_eq!(ts.entries, vec![(0, 0, -4.0)]);
        assert_eq!(ts.offset, 4.0);
    }

    #[test]
    fn objective_coefficients() {
        let (_, q) = appendix(PenaltyConfig::overlapping());
        let mr22 = q.catalog.index_of(&st("MR"), 1, 22).unwrap();
        assert_eq!(q.objective[mr22], 2.5);
        let cs40 = q.catalog.index_of(&st("CS"), 2, 40).unwrap();
        assert_eq!(q.objective[cs40], 0.0);
        for t in 19..=21 {
            let i = q.catalog.index_of(&st("PS"), 1, t).unwrap();
            assert_eq!(q.objective[i], 0.0);
            assert!(!q.provenance[&(i, i)].contains(&TermTag::Objective));
        }
    }

    #[test]
    fn objective_needs_positive_d_max() {
        let mut inst = make_appendix_instance();
        inst.d_max = 0;
        let w = compute_time_windows(&inst).unwrap();
        let cat = build_catalog(&inst, &w).unwrap();
        assert!(matches!(encode_objective(&cat, &inst), Err(Error::Parameter(_))));
    }

    #[test]
    fn empty_instance_gives_empty_qubo() {
        let mut inst = make_appendix_instance();
        inst.trains.clear();
        inst.rollingstock_pairs.clear();
        inst.objective_stations.clear();
        let w = compute_time_windows(&inst).unwrap();
        let q = assemble(&inst, &w, &PenaltyConfig::overlapping()).unwrap();
        assert_eq!(q.n, 0);
        assert!(q.terms.is_empty());
        assert_eq!(q.offset, 0.0);
    }

    #[test]
    fn appendix_energies() {
        let (_, q) = appendix(PenaltyConfig::overlapping());
        assert_eq!(q.evaluate(&[0; 18]).unwrap(), 6.0 * 4.0);
        assert_eq!(q.evaluate(&bits_for(&q, &OPTIMAL)).unwrap(), 6.0);
        let second = [
            ("PS", 1, 19),
            ("MR", 1, 22),
            ("CS", 1, 38),
            ("CS", 2, 42),
            ("MR", 2, 57),
            ("PS", 2, 60),
        ];
        assert_eq!(q.evaluate(&bits_for(&q, &second)).unwrap(), 7.5);
        assert!(q.evaluate(&[0; 3]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let (_, q) = appendix(PenaltyConfig::split());
        let text = q.to_text();
        assert!(text.starts_with("nvars 18 offset 240\n"));
        let back = Qubo::from_text(&text, Some(&q.catalog.to_text())).unwrap();
        assert_eq!(back.terms, q.terms);
        assert_eq!(back.offset, q.offset);
        assert_eq!(back.provenance, q.provenance);
        assert_eq!(back.objective, q.objective);
        assert_eq!(back.catalog, q.catalog);
        assert_eq!(back.penalties.p_sum, 40.0);
        assert_eq!(back.counts, q.counts);
        assert_eq!(back.station_stay, 1);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn malformed_qubo_names_line() {
        let err = Qubo::from_text("nvars 2 offset 0\n0 1 x passing\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
