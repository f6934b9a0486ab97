//! Metropolis edge-toggle sampling from `Pr(Y = y) ∝ exp(theta . t(y))`.
//!
//! Proposals pick one of the `C(n, 2)` dyads uniformly and toggle it with
//! probability `min(1, exp(dq))`, so the allowed moves are exactly single
//! Hamming steps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::McmcError;
use crate::graph::{Dyad, Graph, NodeAttributeTable};
use crate::potential::{change_stats_unchecked, delta_potential, stats, StatDelta, StatVector, Theta};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub burnin: u64,
    pub thin: u64,
    pub steps: u64,
    pub heat: f64,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.thin == 0 {
            return Err(McmcError::Config("thin must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(McmcError::Config("steps must be at least 1".into()));
        }
        if !(self.heat > 0.0 && self.heat.is_finite()) {
            return Err(McmcError::Config(format!("heat must be positive, got {}", self.heat)));
        }
        Ok(())
    }
}

/// Result of one Metropolis proposal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub dyad: Dyad,
    pub accepted: bool,
    pub dq: f64,
    pub delta: StatDelta,
}

/// `min(1, exp(dq))`.
pub fn acceptance_probability(dq: f64) -> f64 {
    if dq >= 0.0 {
        1.0
    } else {
        dq.exp()
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(dq: f64, rng: &mut R) -> bool {
    // log-space comparison: ln(u) < dq
    dq >= 0.0 || rng.random::<f64>().ln() < dq
}

/// One proposal on a bare graph. Prefer [`Chain`] for long runs.
pub fn metropolis_step<R: Rng + ?Sized>(
    g: &mut Graph,
    theta: &Theta,
    a: &NodeAttributeTable,
    rng: &mut R,
) -> StepOutcome {
    let n = g.n();
    let d = Dyad::from_index(n, rng.random_range(0..Dyad::count(n)));
    let delta = change_stats_unchecked(g, a, d);
    let dq = delta_potential(theta, &delta);
    let accepted = accept(dq, rng);
    if accepted {
        g.toggle_unchecked(d);
    }
    StepOutcome {
        dyad: d,
        accepted,
        dq,
        delta,
    }
}

/// A Metropolis chain that tracks its statistic vector incrementally.
#[derive(Clone, Debug)]
pub struct Chain<'a> {
    graph: Graph,
    stats: StatVector,
    theta: Theta,
    attrs: &'a NodeAttributeTable,
    dyads: Vec<Dyad>,
}

impl<'a> Chain<'a> {
    pub fn new(graph: Graph, theta: Theta, attrs: &'a NodeAttributeTable) -> Self {
        let stats = stats(&graph, attrs).expect("graph and attributes disagree on n");
        let dyads = Dyad::all(graph.n()).collect();
        Chain {
            graph,
            stats,
            theta,
            attrs,
            dyads,
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    pub fn stats(&self) -> StatVector {
        self.stats
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let d = self.dyads[rng.random_range(0..self.dyads.len())];
        let delta = change_stats_unchecked(&self.graph, self.attrs, d);
        let dq = delta_potential(&self.theta, &delta);
        let accepted = accept(dq, rng);
        if accepted {
            self.graph.toggle_unchecked(d);
            self.stats = self.stats.apply(delta);
        }
        StepOutcome {
            dyad: d,
            accepted,
            dq,
            delta,
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: u64, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }
}

/// Receives state occupancy and observed transitions from a recording chain.
pub trait StateSink {
    /// The chain occupied `state` for `times` consecutive steps.
    fn visit(&mut self, state: &StatVector, times: u64);
    /// An accepted move from `from` to `to`.
    fn transition(&mut self, from: &StatVector, to: &StatVector);
}

/// Runs `count` thinned draws from one chain at `theta / heat`, started from
/// the empty graph. The chain's stream is derived from `cfg.seed`.
pub fn sample_heated_seeds(
    theta: &Theta,
    a: &NodeAttributeTable,
    cfg: &ChainConfig,
    count: usize,
) -> Result<Vec<Graph>, McmcError> {
    cfg.validate()?;
    if count == 0 {
        return Err(McmcError::Config("seed count must be at least 1".into()));
    }
    let mut rng = rng::stream(cfg.seed, Purpose::HeatedSeeds, 0);
    let heated = theta.scaled(1.0 / cfg.heat);
    let mut chain = Chain::new(Graph::empty(a.n()), heated, a);
    chain.run(cfg.burnin, &mut rng);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        chain.run(cfg.thin, &mut rng);
        out.push(chain.graph().clone());
    }
    Ok(out)
}

/// Runs `steps` unthinned Metropolis steps from `seed_graph`, reporting the
/// occupied state once per step (plus once for the starting state) and every
/// accepted move as a transition.
pub fn run_recording_chain<S, R>(
    seed_graph: Graph,
    theta: &Theta,
    a: &NodeAttributeTable,
    steps: u64,
    sink: &mut S,
    rng: &mut R,
) where
    S: StateSink + ?Sized,
    R: Rng + ?Sized,
{
    let mut chain = Chain::new(seed_graph, *theta, a);
    let mut current = chain.stats();
    let mut dwell = 1u64;
    for _ in 0..steps {
        if chain.step(rng).accepted {
            let next = chain.stats();
            sink.visit(&current, dwell);
            sink.transition(&current, &next);
            current = next;
            dwell = 1;
        } else {
            dwell += 1;
        }
    }
    sink.visit(&current, dwell);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectionConfig {
    pub burnin: u64,
    pub thin: u64,
    /// Thinned draws taken per batch before checking whether enough were kept.
    pub batch: u64,
    /// Total thinned draws allowed before giving up.
    pub max_draws: u64,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        RejectionConfig {
            burnin: 160_000,
            thin: 10_000,
            batch: 500,
            max_draws: 50_000,
        }
    }
}

/// Draws graphs whose statistics satisfy `target` by thinning a chain started
/// at `init` and keeping matching draws, extending it batch by batch until
/// `count` graphs have been kept.
pub fn rejection_sample_state<F, R>(
    theta: &Theta,
    a: &NodeAttributeTable,
    init: Graph,
    target: F,
    count: usize,
    cfg: &RejectionConfig,
    rng: &mut R,
) -> Result<Vec<Graph>, McmcError>
where
    F: Fn(&StatVector) -> bool,
    R: Rng + ?Sized,
{
    if cfg.thin == 0 || cfg.batch == 0 {
        return Err(McmcError::Config("thin and batch must be at least 1".into()));
    }
    if count == 0 {
        return Err(McmcError::Config("count must be at least 1".into()));
    }
    let mut chain = Chain::new(init, *theta, a);
    chain.run(cfg.burnin, rng);
    let mut kept = Vec::with_capacity(count);
    let mut draws = 0u64;
    while kept.len() < count {
        if draws >= cfg.max_draws {
            return Err(McmcError::BudgetExhausted {
                draws,
                accepted: kept.len(),
                wanted: count,
                rate: kept.len() as f64 / draws.max(1) as f64,
            });
        }
        let batch = cfg.batch.min(cfg.max_draws - draws);
        for _ in 0..batch {
            chain.run(cfg.thin, rng);
            if target(&chain.stats()) {
                kept.push(chain.graph().clone());
            }
        }
        draws += batch;
    }
    kept.truncate(count);
    Ok(kept)
}
