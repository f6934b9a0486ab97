//! Continuous-time ERGM generating processes over single-dyad toggles.
//!
//! Each process is a CTMC whose toggle rates satisfy
//! `rate(y -> y') / rate(y' -> y) = exp(q(y') - q(y))`, so `exp(q)` is its
//! stationary law. Simulation is exact (direct method): holding times are
//! exponential in the total rate and the toggled dyad is drawn in proportion
//! to its rate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::EgpError;
use crate::graph::{Attr, Dyad, Graph, NodeAttributeTable};
use crate::potential::{change_stats_unchecked, delta_potential, stats, StatDelta, StatVector, Theta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EgpVariant {
    /// Rates sigmoidal in the potential difference.
    Lergm,
    /// Change inhibition: uphill at unit rate, downhill damped by `exp(dq)`.
    Ci,
    /// Constant dissolution rate, formation rate `nu * exp(dq)`.
    Cdcstergm,
    /// Constant formation rate, dissolution rate `nu * exp(dq)`.
    Cfcstergm,
}

impl EgpVariant {
    pub const ALL: [EgpVariant; 4] = [
        EgpVariant::Lergm,
        EgpVariant::Ci,
        EgpVariant::Cdcstergm,
        EgpVariant::Cfcstergm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EgpVariant::Lergm => "lergm",
            EgpVariant::Ci => "ci",
            EgpVariant::Cdcstergm => "cdcstergm",
            EgpVariant::Cfcstergm => "cfcstergm",
        }
    }
}

impl fmt::Display for EgpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EgpVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        EgpVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown process {s:?}, expected lergm, ci, cdcstergm or cfcstergm"))
    }
}

/// A process variant with its constant-rate parameter (ignored by LERGM and CI).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgpKind {
    pub variant: EgpVariant,
    pub nu: f64,
}

impl EgpKind {
    pub const DEFAULT_NU: f64 = 0.5;

    pub fn new(variant: EgpVariant, nu: f64) -> Self {
        assert!(nu > 0.0 && nu.is_finite(), "nu must be positive");
        EgpKind { variant, nu }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rate of a toggle that changes the potential by `dq`; `adding` tells
/// whether it creates an edge.
#[inline]
pub fn move_rate(kind: EgpKind, dq: f64, adding: bool) -> f64 {
    match kind.variant {
        EgpVariant::Lergm => logistic(dq),
        EgpVariant::Ci => dq.min(0.0).exp(),
        EgpVariant::Cdcstergm => {
            if adding {
                kind.nu * dq.exp()
            } else {
                kind.nu
            }
        }
        EgpVariant::Cfcstergm => {
            if adding {
                kind.nu
            } else {
                kind.nu * dq.exp()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub dyad: Dyad,
    /// State after the toggle.
    pub stats: StatVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: EgpKind,
    pub t0: f64,
    pub start: StatVector,
    /// The graph at `t0`, when it was recorded.
    pub origin: Option<Graph>,
    pub events: Vec<Event>,
}

impl Trajectory {
    /// Number of toggles, i.e. the walk length.
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Visited states including the start.
    pub fn states(&self) -> Vec<StatVector> {
        std::iter::once(self.start)
            .chain(self.events.iter().map(|e| e.stats))
            .collect()
    }

    /// The graph after the first `k` events, replayed from the origin.
    pub fn graph_at(&self, k: usize) -> Option<Graph> {
        let mut g = self.origin.clone()?;
        for e in self.events.iter().take(k) {
            g.toggle(e.dyad).ok()?;
        }
        Some(g)
    }
}

const BLOCK: usize = 16;

/// Per-dyad rates with cached sums over fixed blocks of consecutive dyads.
/// A block sum is recomputed from its members whenever one of them changes,
/// so the cached totals never drift from the rates they summarize.
#[derive(Clone, Debug)]
struct RateTable {
    rates: Vec<f64>,
    sums: Vec<f64>,
    dirty: Vec<bool>,
}

impl RateTable {
    fn new(len: usize) -> Self {
        let blocks = len.div_ceil(BLOCK);
        RateTable {
            rates: vec![0.0; len],
            sums: vec![0.0; blocks],
            dirty: vec![true; blocks],
        }
    }

    fn set(&mut self, k: usize, rate: f64) {
        self.rates[k] = rate;
        self.dirty[k / BLOCK] = true;
    }

    fn refresh(&mut self) {
        for (b, sum) in self.sums.iter_mut().enumerate() {
            if self.dirty[b] {
                let end = ((b + 1) * BLOCK).min(self.rates.len());
                *sum = self.rates[b * BLOCK..end].iter().sum();
                self.dirty[b] = false;
            }
        }
    }

    fn total(&self) -> f64 {
        self.sums.iter().sum()
    }

    /// Index whose cumulative interval contains `u`, for `0 <= u < total`.
    /// Zero-rate entries are never returned.
    fn find(&self, mut u: f64) -> Option<usize> {
        let mut pick = None;
        for (b, &sum) in self.sums.iter().enumerate() {
            if sum <= 0.0 {
                continue;
            }
            let end = ((b + 1) * BLOCK).min(self.rates.len());
            if u < sum {
                for (k, &r) in self.rates[b * BLOCK..end].iter().enumerate() {
                    if r > 0.0 {
                        pick = Some(b * BLOCK + k);
                        if u < r {
                            break;
                        }
                        u -= r;
                    }
                }
                return pick;
            }
            u -= sum;
            pick = self.rates[b * BLOCK..end]
                .iter()
                .rposition(|&r| r > 0.0)
                .map(|k| b * BLOCK + k);
        }
        pick
    }
}

/// Static data of one dyad on a graph of at most 64 nodes: its endpoints,
/// attribute matches and the same-group masks for its common neighbours
/// (zero when unmatched).
#[derive(Clone, Copy, Debug)]
struct NarrowDyad {
    i: usize,
    j: usize,
    m1: i32,
    m2: i32,
    mask1: u64,
    mask2: u64,
}

impl NarrowDyad {
    fn new(d: Dyad, a: &NodeAttributeTable) -> Self {
        let (i, j) = (d.i(), d.j());
        let part = |attr: Attr| {
            if a.matched(attr, i, j) {
                (1, a.mask(attr, a.value(attr, i))[0])
            } else {
                (0, 0)
            }
        };
        let ((m1, mask1), (m2, mask2)) = (part(Attr::B1), part(Attr::B2));
        NarrowDyad {
            i,
            j,
            m1,
            m2,
            mask1,
            mask2,
        }
    }

    /// Presence bit, degree sum without the edge and the two same-group
    /// common-neighbour counts.
    #[inline]
    fn features(&self, g: &Graph) -> [usize; 4] {
        let (ri, rj) = (g.word_row(self.i), g.word_row(self.j));
        let present = (ri >> self.j & 1) as usize;
        let both = ri & rj;
        [
            present,
            (g.degree(self.i) + g.degree(self.j)) as usize - 2 * present,
            (both & self.mask1).count_ones() as usize,
            (both & self.mask2).count_ones() as usize,
        ]
    }

    #[inline]
    fn delta(&self, g: &Graph) -> StatDelta {
        features_delta(self.features(g), self.m1, self.m2)
    }
}

#[inline]
fn features_delta([present, two_star, c1, c2]: [usize; 4], m1: i32, m2: i32) -> StatDelta {
    let sign = 1 - 2 * present as i32;
    StatDelta([
        sign,
        sign * two_star as i32,
        sign * m1,
        sign * m2,
        sign * c1 as i32,
        sign * c2 as i32,
    ])
}

/// Largest rate table built; bigger graphs compute rates directly.
const MAX_TABLE: usize = 1 << 17;

/// Every rate a dyad of a narrow graph can take, indexed by its attribute
/// class and features. Entries are produced by the same rate law as the
/// direct computation, so lookups agree with it exactly.
#[derive(Clone, Debug)]
struct RateLookup {
    /// Per class `m1 + 2 * m2`: offset, common-neighbour extents.
    layout: [(usize, usize, usize); 4],
    span: usize,
    rates: Vec<f64>,
}

impl RateLookup {
    fn new(kind: EgpKind, theta: &Theta, n: usize) -> Option<Self> {
        let span = (2 * n).saturating_sub(3).max(1);
        let cn = n.saturating_sub(1).max(1);
        let mut layout = [(0, 0, 0); 4];
        let mut size = 0;
        for (class, slot) in layout.iter_mut().enumerate() {
            let e1 = if class & 1 == 1 { cn } else { 1 };
            let e2 = if class & 2 == 2 { cn } else { 1 };
            *slot = (size, e1, e2);
            size += 2 * span * e1 * e2;
        }
        if size > MAX_TABLE {
            return None;
        }
        let mut rates = vec![0.0; size];
        for (class, &(offset, e1, e2)) in layout.iter().enumerate() {
            let (m1, m2) = ((class & 1) as i32, (class >> 1) as i32);
            for present in 0..2 {
                for two_star in 0..span {
                    for c1 in 0..e1 {
                        for c2 in 0..e2 {
                            let delta = features_delta([present, two_star, c1, c2], m1, m2);
                            let idx = offset + ((present * span + two_star) * e1 + c1) * e2 + c2;
                            rates[idx] = move_rate(kind, delta_potential(theta, &delta), present == 0);
                        }
                    }
                }
            }
        }
        Some(RateLookup { layout, span, rates })
    }

    #[inline]
    fn rate(&self, d: &NarrowDyad, [present, two_star, c1, c2]: [usize; 4]) -> f64 {
        let (offset, e1, e2) = self.layout[(d.m1 + 2 * d.m2) as usize];
        self.rates[offset + ((present * self.span + two_star) * e1 + c1) * e2 + c2]
    }
}

/// Exact simulator holding the current graph and per-dyad rates.
#[derive(Clone, Debug)]
pub struct EgpSimulator<'a> {
    kind: EgpKind,
    theta: Theta,
    attrs: &'a NodeAttributeTable,
    graph: Graph,
    stats: StatVector,
    dyads: Vec<Dyad>,
    narrow: Option<Vec<NarrowDyad>>,
    lookup: Option<RateLookup>,
    incident: Vec<Vec<usize>>,
    rates: RateTable,
    time: f64,
    events: u64,
}

impl<'a> EgpSimulator<'a> {
    pub fn new(kind: EgpKind, graph: Graph, theta: Theta, attrs: &'a NodeAttributeTable) -> Self {
        let n = graph.n();
        let stats = stats(&graph, attrs).expect("graph and attributes disagree on n");
        let dyads: Vec<Dyad> = Dyad::all(n).collect();
        let mut incident = vec![Vec::new(); n];
        for (k, d) in dyads.iter().enumerate() {
            incident[d.i()].push(k);
            incident[d.j()].push(k);
        }
        let narrow = graph
            .is_narrow()
            .then(|| dyads.iter().map(|&d| NarrowDyad::new(d, attrs)).collect());
        let lookup = narrow.as_ref().and_then(|_| RateLookup::new(kind, &theta, n));
        let mut sim = EgpSimulator {
            kind,
            theta,
            attrs,
            graph,
            stats,
            rates: RateTable::new(dyads.len()),
            narrow,
            lookup,
            dyads,
            incident,
            time: 0.0,
            events: 0,
        };
        for k in 0..sim.dyads.len() {
            sim.rates.set(k, sim.rate_of(k));
        }
        sim.rates.refresh();
        sim
    }

    #[inline]
    fn delta_of(&self, k: usize) -> StatDelta {
        match &self.narrow {
            Some(info) => info[k].delta(&self.graph),
            None => change_stats_unchecked(&self.graph, self.attrs, self.dyads[k]),
        }
    }

    #[inline]
    fn rate_of(&self, k: usize) -> f64 {
        if let (Some(info), Some(lookup)) = (&self.narrow, &self.lookup) {
            let d = &info[k];
            return lookup.rate(d, d.features(&self.graph));
        }
        let delta = self.delta_of(k);
        move_rate(self.kind, delta_potential(&self.theta, &delta), delta.0[0] > 0)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn stats(&self) -> StatVector {
        self.stats
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates.rates
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    /// Rates recomputed from scratch, for cross-checking the cached ones.
    pub fn fresh_rates(&self) -> Vec<f64> {
        self.dyads
            .iter()
            .map(|&d| {
                let delta = change_stats_unchecked(&self.graph, self.attrs, d);
                move_rate(self.kind, delta_potential(&self.theta, &delta), delta.0[0] > 0)
            })
            .collect()
    }

    /// Advances by one toggle.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Event, EgpError> {
        let total = self.total_rate();
        if !(total > 0.0) {
            return Err(EgpError::Absorbing);
        }
        let hold = Exp::new(total).map_err(|_| EgpError::Absorbing)?;
        self.time += hold.sample(rng);
        let k = self
            .rates
            .find(rng.random::<f64>() * total)
            .ok_or(EgpError::Absorbing)?;
        let d = self.dyads[k];
        let delta = self.delta_of(k);
        self.graph.toggle_unchecked(d);
        self.stats = self.stats.apply(delta);
        // only dyads sharing a node with `d` see a different degree or
        // common-neighbour set
        for node in [d.i(), d.j()] {
            for idx in 0..self.incident[node].len() {
                let m = self.incident[node][idx];
                self.rates.set(m, self.rate_of(m));
            }
        }
        self.rates.refresh();
        self.events += 1;
        Ok(Event {
            time: self.time,
            dyad: d,
            stats: self.stats,
        })
    }
}

/// Simulates from `g0` until `stop(state, time)` holds (checked before every
/// event, including the first) or `max_events` toggles have occurred.
pub fn simulate<F, R>(
    kind: EgpKind,
    g0: Graph,
    theta: &Theta,
    a: &NodeAttributeTable,
    mut stop: F,
    max_events: u64,
    rng: &mut R,
) -> Result<Trajectory, EgpError>
where
    F: FnMut(&StatVector, f64) -> bool,
    R: Rng + ?Sized,
{
    let mut sim = EgpSimulator::new(kind, g0, *theta, a);
    let mut traj = Trajectory {
        kind,
        t0: 0.0,
        start: sim.stats(),
        origin: Some(sim.graph().clone()),
        events: Vec::new(),
    };
    while !stop(&sim.stats(), sim.time()) {
        if sim.events() >= max_events {
            return Err(EgpError::BudgetExhausted {
                budget: max_events,
                partial: Box::new(traj),
            });
        }
        traj.events.push(sim.step(rng)?);
    }
    Ok(traj)
}

/// Accumulates a walk that restarts its record whenever it re-enters `source`.
#[derive(Clone, Debug)]
pub struct SourceTruncator {
    source: StatVector,
    traj: Trajectory,
}

impl SourceTruncator {
    pub fn new(kind: EgpKind, source: StatVector) -> Self {
        SourceTruncator {
            source,
            traj: Trajectory {
                kind,
                t0: 0.0,
                start: source,
                origin: None,
                events: Vec::new(),
            },
        }
    }

    /// Starts the record from a known graph in the source state.
    pub fn with_origin(kind: EgpKind, source: StatVector, origin: Graph) -> Self {
        let mut rec = SourceTruncator::new(kind, source);
        rec.traj.origin = Some(origin);
        rec
    }

    /// Records `e`; a return to the source discards the record so far.
    pub fn push(&mut self, e: Event) {
        self.push_at(e, None);
    }

    /// Like [`SourceTruncator::push`], with the graph reached by `e` so the
    /// restarted record keeps its origin.
    pub fn push_at(&mut self, e: Event, reached: Option<&Graph>) {
        if e.stats == self.source {
            self.traj.events.clear();
            self.traj.t0 = e.time;
            self.traj.origin = reached.cloned();
        } else {
            self.traj.events.push(e);
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }
}

/// Runs from `seed` (which must lie in `source`) until `target` is reached.
/// The returned walk starts at the last departure from `source`, so it never
/// revisits it. `budget` bounds the total number of simulated toggles,
/// truncated ones included.
#[allow(clippy::too_many_arguments)]
pub fn simulate_until_target<R: Rng + ?Sized>(
    kind: EgpKind,
    seed: Graph,
    theta: &Theta,
    a: &NodeAttributeTable,
    source: StatVector,
    target: StatVector,
    budget: u64,
    rng: &mut R,
) -> Result<Trajectory, EgpError> {
    let mut sim = EgpSimulator::new(kind, seed, *theta, a);
    if sim.stats() != source {
        return Err(EgpError::SeedNotInSource);
    }
    let mut rec = SourceTruncator::with_origin(kind, source, sim.graph().clone());
    while sim.stats() != target {
        if sim.events() >= budget {
            return Err(EgpError::BudgetExhausted {
                budget,
                partial: Box::new(rec.into_trajectory()),
            });
        }
        let e = sim.step(rng)?;
        let back = e.stats == source;
        rec.push_at(e, back.then(|| sim.graph()));
    }
    Ok(rec.into_trajectory())
}
