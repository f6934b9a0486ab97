//! Sampled graphs collapsed into states keyed by their statistic vector.
//!
//! Occupancy counts give the state probability estimates, and every accepted
//! Hamming move observed between two states becomes an undirected edge of the
//! transition structure.

use std::collections::{BTreeSet, HashMap};

use crate::error::StateSpaceError;
use crate::mcmc::StateSink;
use crate::potential::{potential, StatVector, Theta};

pub type StateId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct StateRecord {
    pub id: StateId,
    pub stats: StatVector,
    pub count: u64,
    pub q: f64,
    /// `ln(count / total)`; NaN until [`StateSpace::finalize_probs`] runs.
    pub logp: f64,
}

/// Undirected adjacency over state ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionStructure {
    adj: Vec<BTreeSet<StateId>>,
}

impl TransitionStructure {
    fn ensure(&mut self, id: StateId) {
        if self.adj.len() <= id as usize {
            self.adj.resize(id as usize + 1, BTreeSet::new());
        }
    }

    /// Adds `{a, b}`; returns false if it was already present or `a == b`.
    pub fn insert(&mut self, a: StateId, b: StateId) -> bool {
        if a == b {
            return false;
        }
        self.ensure(a.max(b));
        let fresh = self.adj[a as usize].insert(b);
        self.adj[b as usize].insert(a);
        fresh
    }

    pub fn contains(&self, a: StateId, b: StateId) -> bool {
        self.adj.get(a as usize).is_some_and(|s| s.contains(&b))
    }

    /// Neighbours of `id` in increasing id order.
    pub fn neighbors(&self, id: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.adj.get(id as usize).into_iter().flatten().copied()
    }

    pub fn degree(&self, id: StateId) -> usize {
        self.adj.get(id as usize).map_or(0, |s| s.len())
    }

    /// Each undirected edge once, as `(low, high)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(a, nb)| {
            let a = a as StateId;
            nb.range(a + 1..).map(move |&b| (a, b))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }
}

#[derive(Clone, Debug)]
pub struct StateSpace {
    theta: Theta,
    index: HashMap<StatVector, StateId>,
    records: Vec<StateRecord>,
    transitions: TransitionStructure,
    total: u64,
    finalized: bool,
}

impl StateSpace {
    pub fn new(theta: Theta) -> Self {
        StateSpace {
            theta,
            index: HashMap::new(),
            records: Vec::new(),
            transitions: TransitionStructure::default(),
            total: 0,
            finalized: false,
        }
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn records(&self) -> &[StateRecord] {
        &self.records
    }

    pub fn transitions(&self) -> &TransitionStructure {
        &self.transitions
    }

    pub fn id_of(&self, s: &StatVector) -> Option<StateId> {
        self.index.get(s).copied()
    }

    pub fn get(&self, id: StateId) -> Result<&StateRecord, StateSpaceError> {
        self.records.get(id as usize).ok_or(StateSpaceError::UnknownState(id))
    }

    pub fn by_stats(&self, s: &StatVector) -> Option<&StateRecord> {
        self.id_of(s).map(|id| &self.records[id as usize])
    }

    fn intern(&mut self, s: &StatVector) -> StateId {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        let id = self.records.len() as StateId;
        self.records.push(StateRecord {
            id,
            stats: *s,
            count: 0,
            q: potential(&self.theta, s),
            logp: f64::NAN,
        });
        self.index.insert(*s, id);
        id
    }

    /// Records one visit to `s`.
    pub fn accumulate(&mut self, s: &StatVector) -> StateId {
        self.accumulate_n(s, 1)
    }

    pub fn accumulate_n(&mut self, s: &StatVector, times: u64) -> StateId {
        let id = self.intern(s);
        self.records[id as usize].count += times;
        self.total += times;
        self.finalized = false;
        id
    }

    /// Adds the undirected transition `{s, s2}`. Self-transitions are ignored.
    /// Unseen endpoints are registered with zero count.
    pub fn record_transition(&mut self, s: &StatVector, s2: &StatVector) {
        if s == s2 {
            return;
        }
        let a = self.intern(s);
        let b = self.intern(s2);
        self.transitions.insert(a, b);
    }

    /// Folds `other` into `self`. Content (counts, transitions) is independent
    /// of merge order; ids of states new to `self` follow `other`'s id order.
    pub fn merge(&mut self, other: &StateSpace) {
        let map: Vec<StateId> = other
            .records
            .iter()
            .map(|r| {
                let id = self.intern(&r.stats);
                self.records[id as usize].count += r.count;
                id
            })
            .collect();
        self.total += other.total;
        for (a, b) in other.transitions.edges() {
            self.transitions.insert(map[a as usize], map[b as usize]);
        }
        self.finalized = false;
    }

    /// Sets `logp = ln(count) - ln(total)` on every record.
    pub fn finalize_probs(&mut self) -> Result<(), StateSpaceError> {
        if self.total == 0 {
            return Err(StateSpaceError::Empty);
        }
        let ln_total = (self.total as f64).ln();
        for r in &mut self.records {
            r.logp = if r.count == 0 {
                f64::NEG_INFINITY
            } else {
                (r.count as f64).ln() - ln_total
            };
        }
        self.finalized = true;
        Ok(())
    }

    /// Rebuilds a finalized space from persisted records and transitions.
    pub fn from_parts(
        theta: Theta,
        records: Vec<StateRecord>,
        edges: impl IntoIterator<Item = (StateId, StateId)>,
    ) -> Result<Self, StateSpaceError> {
        let mut space = StateSpace::new(theta);
        for (k, r) in records.into_iter().enumerate() {
            if r.id as usize != k {
                return Err(StateSpaceError::UnknownState(r.id));
            }
            space.index.insert(r.stats, r.id);
            space.total += r.count;
            space.records.push(r);
        }
        let n = space.records.len() as StateId;
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(StateSpaceError::UnknownState(a.max(b)));
            }
            space.transitions.insert(a, b);
        }
        space.finalized = space.records.iter().all(|r| !r.logp.is_nan());
        Ok(space)
    }

    /// Same states, counts and transitions, ignoring id assignment.
    pub fn same_content(&self, other: &StateSpace) -> bool {
        if self.len() != other.len() || self.total != other.total {
            return false;
        }
        let edge_set = |sp: &StateSpace| -> BTreeSet<(StatVector, StatVector)> {
            sp.transitions
                .edges()
                .map(|(a, b)| {
                    let (x, y) = (sp.records[a as usize].stats, sp.records[b as usize].stats);
                    (x.min(y), x.max(y))
                })
                .collect()
        };
        self.records
            .iter()
            .all(|r| other.by_stats(&r.stats).is_some_and(|o| o.count == r.count))
            && edge_set(self) == edge_set(other)
    }

    /// Highest-logp state in each aligned regime: source has `t_m1 > hi` and
    /// `t_m2 < lo`, target the mirror image. Ties go to the lower id.
    pub fn find_aligned_states(&self, hi: f64, lo: f64) -> Result<(&StateRecord, &StateRecord), StateSpaceError> {
        if !self.finalized {
            return Err(StateSpaceError::NotFinalized);
        }
        let best = |within: fn(&StatVector) -> f64, across: fn(&StatVector) -> f64| {
            self.records
                .iter()
                .filter(|r| within(&r.stats) > hi && across(&r.stats) < lo)
                .fold(None::<&StateRecord>, |acc, r| match acc {
                    Some(b) if b.logp >= r.logp => Some(b),
                    _ => Some(r),
                })
        };
        let m1 = |s: &StatVector| s.t_m1 as f64;
        let m2 = |s: &StatVector| s.t_m2 as f64;
        let source = best(m1, m2).ok_or(StateSpaceError::RegimeNotFound("B1-aligned"))?;
        let target = best(m2, m1).ok_or(StateSpaceError::RegimeNotFound("B2-aligned"))?;
        Ok((source, target))
    }

    /// Mean number of distinct neighbours per state.
    pub fn mean_degree(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        2.0 * self.transitions.edge_count() as f64 / self.len() as f64
    }
}

impl StateSink for StateSpace {
    fn visit(&mut self, state: &StatVector, times: u64) {
        self.accumulate_n(state, times);
    }

    fn transition(&mut self, from: &StatVector, to: &StatVector) {
        self.record_transition(from, to);
    }
}
