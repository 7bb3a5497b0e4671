//! Integer model of the rescheduling problem and an exact branch-and-bound solver.
//!
//! Time variables take values in their (small) admissible windows. Order
//! variables for headway pairs are implied by the chosen times, so the search
//! only branches on times: variables in train-id and route order, smaller
//! times first. Ties between equal-objective optima resolve to the
//! lexicographically smallest time vector. Trains sharing an edge must keep
//! their order along it; that check is logical rather than linear.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    stop_map, DisturbanceModel, Edge, Instance, Minutes, Station, StopKey, TimeWindows, TrainId,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeVar {
    pub station: Station,
    pub train: TrainId,
    pub lower: Minutes,
    pub upper: Minutes,
    pub nominal: Minutes,
    /// Whether this stop's delay is counted in the objective.
    pub in_objective: bool,
}

impl TimeVar {
    pub fn key(&self) -> StopKey {
        (self.station.clone(), self.train)
    }
}

/// `y_{first,second,station}`: 1 when `first` enters `station` before `second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderVar {
    pub station: Station,
    pub first: TrainId,
    pub second: TrainId,
    /// Index of `y_{second,first,station}`.
    pub complement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintKind {
    Headway,
    RollingStock,
    Passing,
    StochasticPassing,
    NoOvertake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    /// `t[later] >= t[earlier] + gap`
    After {
        earlier: usize,
        later: usize,
        gap: Minutes,
    },
    /// `|t[a] - t[b]| >= gap`, the order being fixed by the implied `y`.
    Separated { a: usize, b: usize, gap: Minutes },
    /// Two trains on a shared edge keep their order: `(a0, b0)` at its start, `(a1, b1)` at its end.
    SameOrder { a0: usize, b0: usize, a1: usize, b1: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IlpConstraint {
    pub kind: ConstraintKind,
    pub relation: Relation,
}

impl IlpConstraint {
    pub fn holds(&self, times: &[Minutes]) -> bool {
        match self.relation {
            Relation::After {
                earlier,
                later,
                gap,
            } => times[later] >= times[earlier] + gap,
            Relation::Separated { a, b, gap } => (times[a] - times[b]).abs() >= gap,
            Relation::SameOrder { a0, b0, a1, b1 } => {
                (times[a0] - times[b0]).signum() * (times[a1] - times[b1]).signum() >= 0
            }
        }
    }

    /// Right-hand side gap of the constraint.
    pub fn gap(&self) -> Minutes {
        match self.relation {
            Relation::After { gap, .. } | Relation::Separated { gap, .. } => gap,
            Relation::SameOrder { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub time_vars: Vec<TimeVar>,
    pub order_vars: Vec<OrderVar>,
    pub constraints: Vec<IlpConstraint>,
    /// Objective weight per minute of delay: `1 / d_max`, or 1 when `d_max = 0`.
    pub objective_scale: f64,
    index: BTreeMap<StopKey, usize>,
}

impl IlpModel {
    pub fn var_index(&self, station: &Station, train: TrainId) -> Option<usize> {
        self.index.get(&(station.clone(), train)).copied()
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    /// Restricts a time variable to a single value.
    pub fn fix(&mut self, station: &Station, train: TrainId, time: Minutes) -> Result<()> {
        let idx = self.var_index(station, train).ok_or_else(|| {
            Error::Parameter(format!("no time variable for train {train} at {station}"))
        })?;
        let var = &mut self.time_vars[idx];
        if time < var.lower || time > var.upper {
            return Err(Error::Parameter(format!(
                "time {time} outside window [{}, {}] of train {train} at {station}",
                var.lower, var.upper
            )));
        }
        var.lower = time;
        var.upper = time;
        Ok(())
    }

    /// Sum of counted delays, in minutes.
    fn delay_minutes(&self, times: &[Minutes]) -> Minutes {
        self.time_vars
            .iter()
            .zip(times)
            .filter(|(v, _)| v.in_objective)
            .map(|(v, &t)| t - v.nominal)
            .sum()
    }

    pub fn objective_of(&self, times: &[Minutes]) -> f64 {
        self.delay_minutes(times) as f64 * self.objective_scale
    }

    /// Indices of constraints violated by a full assignment, including out-of-window times.
    pub fn violated(&self, times: &[Minutes]) -> Vec<usize> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.holds(times))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn within_domains(&self, times: &[Minutes]) -> bool {
        times.len() == self.time_vars.len()
            && self
                .time_vars
                .iter()
                .zip(times)
                .all(|(v, &t)| v.lower <= t && t <= v.upper)
    }

    /// Times keyed by stop in variable order.
    pub fn times_vector(&self, times: &BTreeMap<StopKey, Minutes>) -> Option<Vec<Minutes>> {
        self.time_vars
            .iter()
            .map(|v| times.get(&v.key()).copied())
            .collect()
    }

    /// Value of an order variable implied by a full assignment.
    pub fn order_value(&self, order: usize, times: &[Minutes]) -> bool {
        let y = &self.order_vars[order];
        let (Some(a), Some(b)) = (
            self.var_index(&y.station, y.first),
            self.var_index(&y.station, y.second),
        ) else {
            return false;
        };
        times[a] < times[b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IlpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpSolution {
    #[serde(with = "stop_map")]
    pub times: BTreeMap<StopKey, Minutes>,
    /// `None` when infeasible.
    pub objective_value: Option<f64>,
    pub status: IlpStatus,
}

impl IlpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == IlpStatus::Optimal
    }

    pub fn time(&self, station: &Station, train: TrainId) -> Option<Minutes> {
        self.times.get(&(station.clone(), train)).copied()
    }
}

/// Builds the integer model. With `w_realization`, passing constraints on the
/// listed edges carry the extra delay `w`.
pub fn build_ilp(
    instance: &Instance,
    windows: &TimeWindows,
    w_realization: Option<&BTreeMap<Edge, Minutes>>,
) -> Result<IlpModel> {
    if let Some(ws) = w_realization {
        if let Some(((from, to), w)) = ws.iter().find(|(_, &w)| w < 0) {
            return Err(Error::Parameter(format!(
                "negative extra delay {w} on edge {from}->{to}"
            )));
        }
    }
    let p = &instance.params;
    let mut time_vars = Vec::new();
    let mut index = BTreeMap::new();
    for train in instance.trains_by_id() {
        for station in &train.route {
            let (lower, upper) = windows.get(station, train.id).ok_or_else(|| {
                Error::Config(format!("no time window for train {} at {station}", train.id))
            })?;
            index.insert((station.clone(), train.id), time_vars.len());
            time_vars.push(TimeVar {
                station: station.clone(),
                train: train.id,
                lower,
                upper,
                nominal: train.nominal(station).unwrap_or(lower),
                in_objective: instance.objective_stations.contains(station),
            });
        }
    }
    let lookup = |station: &Station, train: TrainId| -> Result<usize> {
        index.get(&(station.clone(), train)).copied().ok_or_else(|| {
            Error::Config(format!("train {train} does not serve {station}"))
        })
    };

    let mut constraints = Vec::new();
    for train in instance.trains_by_id() {
        for (from, to) in train.edges() {
            let base = p.station_stay_min + p.pass_time(from, to)?;
            let w = w_realization.and_then(|ws| ws.get(&(from.clone(), to.clone())).copied());
            let (kind, gap) = match w {
                Some(w) => (ConstraintKind::StochasticPassing, base + w),
                None => (ConstraintKind::Passing, base),
            };
            constraints.push(IlpConstraint {
                kind,
                relation: Relation::After {
                    earlier: lookup(from, train.id)?,
                    later: lookup(to, train.id)?,
                    gap,
                },
            });
        }
    }
    for (station, pairs) in &instance.rollingstock_pairs {
        for &(j, k) in pairs {
            constraints.push(IlpConstraint {
                kind: ConstraintKind::RollingStock,
                relation: Relation::After {
                    earlier: lookup(station, j)?,
                    later: lookup(station, k)?,
                    gap: p.preparation_min + p.station_stay_min,
                },
            });
        }
    }
    let mut order_vars = Vec::new();
    for (station, pairs) in &instance.headway_pairs {
        for &(j, k) in pairs {
            constraints.push(IlpConstraint {
                kind: ConstraintKind::Headway,
                relation: Relation::Separated {
                    a: lookup(station, j)?,
                    b: lookup(station, k)?,
                    gap: p.headway_min,
                },
            });
            let base = order_vars.len();
            order_vars.push(OrderVar {
                station: station.clone(),
                first: j,
                second: k,
                complement: base + 1,
            });
            order_vars.push(OrderVar {
                station: station.clone(),
                first: k,
                second: j,
                complement: base,
            });
        }
    }
    let mut by_edge: BTreeMap<(Station, Station), Vec<TrainId>> = BTreeMap::new();
    for train in instance.trains_by_id() {
        for (from, to) in train.edges() {
            by_edge.entry((from.clone(), to.clone())).or_default().push(train.id);
        }
    }
    for ((from, to), trains) in &by_edge {
        for (i, &j) in trains.iter().enumerate() {
            for &k in &trains[i + 1..] {
                constraints.push(IlpConstraint {
                    kind: ConstraintKind::NoOvertake,
                    relation: Relation::SameOrder {
                        a0: lookup(from, j)?,
                        b0: lookup(from, k)?,
                        a1: lookup(to, j)?,
                        b1: lookup(to, k)?,
                    },
                });
            }
        }
    }
    let objective_scale = if instance.d_max > 0 {
        1.0 / instance.d_max as f64
    } else {
        1.0
    };
    Ok(IlpModel {
        time_vars,
        order_vars,
        constraints,
        objective_scale,
        index,
    })
}

struct Search<'a> {
    model: &'a IlpModel,
    /// Per variable: `(other, gap)` with `t[self] >= t[other] + gap`.
    incoming: Vec<Vec<(usize, Minutes)>>,
    /// Per variable: `(other, gap)` with `t[other] >= t[self] + gap`.
    outgoing: Vec<Vec<(usize, Minutes)>>,
    separated: Vec<Vec<(usize, Minutes)>>,
    /// Order checks keyed by their last variable in branching order.
    ordered: Vec<Vec<usize>>,
    weight: Vec<Minutes>,
    times: Vec<Minutes>,
    est: Vec<Minutes>,
    best: Option<(Minutes, Vec<Minutes>)>,
}

impl<'a> Search<'a> {
    fn new(model: &'a IlpModel) -> Self {
        let n = model.time_vars.len();
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        let mut separated = vec![Vec::new(); n];
        let mut ordered = vec![Vec::new(); n];
        for (ci, c) in model.constraints.iter().enumerate() {
            match c.relation {
                Relation::After {
                    earlier,
                    later,
                    gap,
                } => {
                    incoming[later].push((earlier, gap));
                    outgoing[earlier].push((later, gap));
                }
                Relation::Separated { a, b, gap } => {
                    separated[a].push((b, gap));
                    separated[b].push((a, gap));
                }
                Relation::SameOrder { a0, b0, a1, b1 } => ordered[a0.max(b0).max(a1).max(b1)].push(ci),
            }
        }
        let weight = model
            .time_vars
            .iter()
            .map(|v| Minutes::from(v.in_objective))
            .collect();
        Search {
            model,
            incoming,
            outgoing,
            separated,
            ordered,
            weight,
            times: vec![0; n],
            est: vec![0; n],
            best: None,
        }
    }

    /// Earliest start times of the unassigned tail given the assigned prefix.
    /// Returns false when some window becomes empty.
    #[allow(clippy::needless_range_loop)]
    fn propagate(&mut self, depth: usize) -> bool {
        let vars = &self.model.time_vars;
        let n = vars.len();
        for v in depth..n {
            self.est[v] = vars[v].lower;
        }
        for _ in 0..=n {
            let mut changed = false;
            for v in depth..n {
                for &(u, gap) in &self.incoming[v] {
                    let base = if u < depth { self.times[u] } else { self.est[u] };
                    if base + gap > self.est[v] {
                        self.est[v] = base + gap;
                        changed = true;
                    }
                }
                if self.est[v] > vars[v].upper {
                    return false;
                }
            }
            if !changed {
                break;
            }
        }
        true
    }

    /// Checks constraints between `k` and earlier variables; `times[k]` already holds `value`.
    fn consistent(&self, k: usize, value: Minutes) -> bool {
        self.outgoing[k]
            .iter()
            .filter(|&&(u, _)| u < k)
            .all(|&(u, gap)| self.times[u] >= value + gap)
            && self.incoming[k]
                .iter()
                .filter(|&&(u, _)| u < k)
                .all(|&(u, gap)| value >= self.times[u] + gap)
            && self.separated[k]
                .iter()
                .filter(|&&(u, _)| u < k)
                .all(|&(u, gap)| (value - self.times[u]).abs() >= gap)
            && self.ordered[k]
                .iter()
                .all(|&ci| self.model.constraints[ci].holds(&self.times))
    }

    fn dfs(&mut self, depth: usize, partial: Minutes) {
        let vars = &self.model.time_vars;
        if depth == vars.len() {
            if self.best.as_ref().is_none_or(|(b, _)| partial < *b) {
                self.best = Some((partial, self.times.clone()));
            }
            return;
        }
        if !self.propagate(depth) {
            return;
        }
        let bound: Minutes = partial
            + (depth..vars.len())
                .map(|v| self.weight[v] * (self.est[v] - vars[v].nominal))
                .sum::<Minutes>();
        if let Some((best, _)) = &self.best {
            if bound >= *best {
                return;
            }
        }
        let (start, upper) = (self.est[depth], vars[depth].upper);
        for value in start..=upper {
            self.times[depth] = value;
            if !self.consistent(depth, value) {
                continue;
            }
            let cost = self.weight[depth] * (value - vars[depth].nominal);
            self.dfs(depth + 1, partial + cost);
        }
    }
}

/// Exact minimisation by depth-first branch and bound over the finite windows.
pub fn solve_exact(model: &IlpModel) -> IlpSolution {
    if model.time_vars.iter().any(|v| v.lower > v.upper) {
        return infeasible();
    }
    let mut search = Search::new(model);
    search.dfs(0, 0);
    match search.best {
        None => infeasible(),
        Some((delay, times)) => IlpSolution {
            times: model
                .time_vars
                .iter()
                .zip(times)
                .map(|(v, t)| (v.key(), t))
                .collect(),
            objective_value: Some(delay as f64 * model.objective_scale),
            status: IlpStatus::Optimal,
        },
    }
}

fn infeasible() -> IlpSolution {
    IlpSolution {
        times: BTreeMap::new(),
        objective_value: None,
        status: IlpStatus::Infeasible,
    }
}

/// Windows and model for an instance, then an exact solve.
pub fn solve_instance(instance: &Instance) -> Result<IlpSolution> {
    let windows = crate::network::compute_time_windows(instance)?;
    Ok(solve_exact(&build_ilp(instance, &windows, None)?))
}

/// Every joint realisation of `w` over `edges`, in lexicographic order.
pub fn realizations(model: &DisturbanceModel, edges: &[Edge]) -> Vec<BTreeMap<Edge, Minutes>> {
    let mut support = model.support.clone();
    support.sort_unstable();
    let mut out = vec![Vec::new()];
    for _ in edges {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Minutes>| {
                support.iter().map(move |&w| {
                    let mut next = prefix.clone();
                    next.push(w);
                    next
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|ws| edges.iter().cloned().zip(ws).collect())
        .collect()
}

/// One exact solve per realisation of the extra passing delay on `edges`.
pub fn sweep_stochastic(
    instance: &Instance,
    windows: &TimeWindows,
    model: &DisturbanceModel,
    edges: &[Edge],
) -> Result<Vec<(BTreeMap<Edge, Minutes>, IlpSolution)>> {
    realizations(model, edges)
        .into_par_iter()
        .map(|w| {
            let ilp = build_ilp(instance, windows, Some(&w))?;
            Ok((w, solve_exact(&ilp)))
        })
        .collect()
}
