//! Maximum state probability change paths and their annotation.
//!
//! The path maximizing the summed log state probability over the observed
//! transition structure is a shortest path under the non-negative node cost
//! `-logp`. Node costs are folded into edge costs by charging each edge the
//! cost of its head and seeding the source with its own cost.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PathError;
use crate::potential::StatVector;
use crate::state_space::{StateId, StateSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Milestone {
    Source,
    Target,
    Intermediate,
    Transition,
    Plain,
}

impl Milestone {
    pub fn as_str(self) -> &'static str {
        match self {
            Milestone::Source => "source",
            Milestone::Target => "target",
            Milestone::Intermediate => "intermediate",
            Milestone::Transition => "transition",
            Milestone::Plain => "plain",
        }
    }
}

impl fmt::Display for Milestone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Milestone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "source" => Milestone::Source,
            "target" => Milestone::Target,
            "intermediate" => Milestone::Intermediate,
            "transition" => Milestone::Transition,
            "plain" => Milestone::Plain,
            other => return Err(format!("unknown milestone {other:?}")),
        })
    }
}

/// An interior extremum of log probability along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MilestoneLabel {
    pub index: usize,
    pub kind: Milestone,
    pub coord: f64,
    pub logp: f64,
}

/// One state on a change path. `id` and `logp` are absent for states that
/// were never observed while estimating the state space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathState {
    pub id: Option<StateId>,
    pub stats: StatVector,
    pub q: f64,
    pub logp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChangePath {
    pub states: Vec<PathState>,
    pub coords: Vec<f64>,
    pub milestones: Vec<Milestone>,
}

/// Evenly spaced change coordinates `i / (len - 1)`; a single state sits at 0.
pub fn change_coordinate(len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = (len - 1) as f64;
            (0..len).map(|i| i as f64 / last).collect()
        }
    }
}

impl ChangePath {
    pub fn new(states: Vec<PathState>) -> Self {
        let len = states.len();
        let coords = change_coordinate(len);
        let mut milestones = vec![Milestone::Plain; len];
        if len > 0 {
            milestones[0] = Milestone::Source;
            milestones[len - 1] = Milestone::Target;
        }
        ChangePath {
            states,
            coords,
            milestones,
        }
    }

    /// Path over states of `space` given by id.
    pub fn from_ids(space: &StateSpace, ids: &[StateId]) -> Result<Self, PathError> {
        let states = ids
            .iter()
            .map(|&id| {
                let r = space.get(id)?;
                Ok(PathState {
                    id: Some(id),
                    stats: r.stats,
                    q: r.q,
                    logp: r.logp,
                })
            })
            .collect::<Result<Vec<_>, PathError>>()?;
        Ok(ChangePath::new(states))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn ids(&self) -> Vec<Option<StateId>> {
        self.states.iter().map(|s| s.id).collect()
    }

    pub fn logp(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.logp).collect()
    }

    pub fn q(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.q).collect()
    }

    pub fn stats(&self) -> impl Iterator<Item = &StatVector> + '_ {
        self.states.iter().map(|s| &s.stats)
    }

    /// Labels interior milestones from `logp` after median smoothing with
    /// `window`, replacing any previous interior labels.
    pub fn annotate(&mut self, window: usize) -> Result<Vec<MilestoneLabel>, PathError> {
        let labels = find_milestones(&self.logp(), window)?;
        for m in self.milestones.iter_mut() {
            if matches!(m, Milestone::Intermediate | Milestone::Transition) {
                *m = Milestone::Plain;
            }
        }
        for l in &labels {
            self.milestones[l.index] = l.kind;
        }
        Ok(labels)
    }

    pub fn reversed(&self) -> ChangePath {
        ChangePath::new(self.states.iter().rev().copied().collect())
    }
}

/// Which per-state quantity the path search maximizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathWeight {
    /// Estimated log state probability.
    #[default]
    Logp,
    /// Potential only, normalized over observed states as `q - logsumexp(q)`,
    /// i.e. ignoring state multiplicities.
    Q,
}

impl FromStr for PathWeight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "logp" => Ok(PathWeight::Logp),
            "q" => Ok(PathWeight::Q),
            other => Err(format!("unknown path weight {other:?}, expected logp or q")),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: StateId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn trace(pred: &[Option<StateId>], mut v: StateId) -> Vec<StateId> {
    let mut out = vec![v];
    while let Some(p) = pred[v as usize] {
        out.push(p);
        v = p;
    }
    out.reverse();
    out
}

/// Minimum total node cost path from `source` to `target`, costs included
/// once per visited node. Among equal-cost paths the lexicographically
/// smallest id sequence wins. Costs must be non-negative.
pub fn min_node_cost_path<'a, N, I>(
    n: usize,
    neighbors: N,
    cost: &[f64],
    source: StateId,
    target: StateId,
) -> Option<Vec<StateId>>
where
    N: Fn(StateId) -> I,
    I: Iterator<Item = StateId> + 'a,
{
    debug_assert!(cost.iter().all(|c| *c >= 0.0));
    if source == target {
        return Some(vec![source]);
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<StateId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source as usize] = cost[source as usize];
    heap.push(Reverse(Frontier {
        cost: dist[source as usize],
        node: source,
    }));
    while let Some(Reverse(Frontier { cost: d, node: u })) = heap.pop() {
        if done[u as usize] || d > dist[u as usize] {
            continue;
        }
        done[u as usize] = true;
        if u == target {
            return Some(trace(&pred, target));
        }
        for v in neighbors(u) {
            let vi = v as usize;
            if done[vi] {
                continue;
            }
            let nd = d + cost[vi];
            if nd < dist[vi] {
                dist[vi] = nd;
                pred[vi] = Some(u);
                heap.push(Reverse(Frontier { cost: nd, node: v }));
            } else if nd == dist[vi] {
                if let Some(p) = pred[vi] {
                    if trace(&pred, u) < trace(&pred, p) {
                        pred[vi] = Some(u);
                    }
                }
            }
        }
    }
    None
}

/// The maximum state probability change path from `source` to `target`.
pub fn mspcp(
    space: &StateSpace,
    source: StateId,
    target: StateId,
    weight: PathWeight,
) -> Result<ChangePath, PathError> {
    if !space.is_finalized() {
        return Err(crate::error::StateSpaceError::NotFinalized.into());
    }
    space.get(source)?;
    space.get(target)?;
    let cost: Vec<f64> = match weight {
        PathWeight::Logp => space.records().iter().map(|r| -r.logp).collect(),
        PathWeight::Q => {
            let qmax = space.records().iter().map(|r| r.q).fold(f64::NEG_INFINITY, f64::max);
            let lse = qmax + space.records().iter().map(|r| (r.q - qmax).exp()).sum::<f64>().ln();
            space.records().iter().map(|r| (lse - r.q).max(0.0)).collect()
        }
    };
    let tr = space.transitions();
    let ids =
        min_node_cost_path(space.len(), |u| tr.neighbors(u), &cost, source, target).ok_or(PathError::Disconnected {
            source_id: source,
            target,
        })?;
    ChangePath::from_ids(space, &ids)
}

/// Moving median with a centred window, truncated at the ends.
pub fn moving_median(values: &[f64], window: usize) -> Vec<f64> {
    let h = window / 2;
    let len = values.len();
    (0..len)
        .map(|i| {
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(len - 1);
            let mut w: Vec<f64> = values[lo..=hi].to_vec();
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect()
}

/// Interior strict local maxima (intermediates) and minima (transition
/// states) of `logp` after median smoothing. A plateau of equal values counts
/// once, at its midpoint, when both flanks lie strictly on the same side.
pub fn find_milestones(logp: &[f64], window: usize) -> Result<Vec<MilestoneLabel>, PathError> {
    let len = logp.len();
    if len < 3 {
        return Err(PathError::NoInterior(len));
    }
    if window.is_multiple_of(2) {
        return Err(PathError::EvenWindow(window));
    }
    let v = if window > 1 {
        moving_median(logp, window)
    } else {
        logp.to_vec()
    };
    let coords = change_coordinate(len);
    let mut out = Vec::new();
    let mut a = 0;
    while a < len {
        let mut b = a;
        while b + 1 < len && v[b + 1] == v[a] {
            b += 1;
        }
        if a > 0 && b + 1 < len {
            let (left, right, x) = (v[a - 1], v[b + 1], v[a]);
            let kind = if x > left && x > right {
                Some(Milestone::Intermediate)
            } else if x < left && x < right {
                Some(Milestone::Transition)
            } else {
                None
            };
            if let Some(kind) = kind {
                let index = (a + b) / 2;
                out.push(MilestoneLabel {
                    index,
                    kind,
                    coord: coords[index],
                    logp: logp[index],
                });
            }
        }
        a = b + 1;
    }
    Ok(out)
}

/// One row of the per-state statistics table along a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRow {
    pub coord: f64,
    pub id: Option<StateId>,
    pub stats: StatVector,
    pub normalized: [f64; 6],
    pub q: f64,
    pub logp: f64,
    pub milestone: Milestone,
}

/// Divides each column by its maximum; an all-zero column stays zero.
pub fn normalize_columns(rows: &[[f64; 6]]) -> Vec<[f64; 6]> {
    let mut max = [0.0f64; 6];
    for r in rows {
        for k in 0..6 {
            max[k] = max[k].max(r[k]);
        }
    }
    rows.iter()
        .map(|r| std::array::from_fn(|k| if max[k] > 0.0 { r[k] / max[k] } else { 0.0 }))
        .collect()
}

pub fn stats_along_path(path: &ChangePath) -> Vec<PathRow> {
    let raw: Vec<[f64; 6]> = path.states.iter().map(|s| s.stats.to_array().map(f64::from)).collect();
    let norm = normalize_columns(&raw);
    path.states
        .iter()
        .zip(norm)
        .enumerate()
        .map(|(k, (s, normalized))| PathRow {
            coord: path.coords[k],
            id: s.id,
            stats: s.stats,
            normalized,
            q: s.q,
            logp: s.logp,
            milestone: path.milestones[k],
        })
        .collect()
}

/// Density-first realignment check on a path: the edge count rises above the
/// source's, and the normalized `t_m2` curve reaches 0.9 before the
/// normalized `t_m1` curve makes its final drop below 0.9.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HighRoad {
    pub source_edges: u32,
    pub max_edges: u32,
    pub m2_reach: Option<f64>,
    pub m1_fall: Option<f64>,
}

impl HighRoad {
    pub const LEVEL: f64 = 0.9;

    pub fn evaluate(path: &ChangePath) -> HighRoad {
        let rows = stats_along_path(path);
        let source_edges = path.states.first().map_or(0, |s| s.stats.t_e);
        let max_edges = path.stats().map(|s| s.t_e).max().unwrap_or(0);
        let m2_reach = rows.iter().find(|r| r.normalized[3] >= Self::LEVEL).map(|r| r.coord);
        // start of the final run below the level
        let mut m1_fall = None;
        for r in rows.iter().rev() {
            if r.normalized[2] < Self::LEVEL {
                m1_fall = Some(r.coord);
            } else {
                break;
            }
        }
        HighRoad {
            source_edges,
            max_edges,
            m2_reach,
            m1_fall,
        }
    }

    pub fn holds(&self) -> bool {
        match (self.m2_reach, self.m1_fall) {
            (Some(up), Some(down)) => self.max_edges > self.source_edges && up < down,
            _ => false,
        }
    }
}
