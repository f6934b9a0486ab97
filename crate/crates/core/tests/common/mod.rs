//! Independent reference implementations shared by the integration tests.
//! Everything here is written for clarity, not speed.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use tst_core::graph::{Dyad, Graph, NodeAttributeTable};
use tst_core::potential::{potential, StatVector, Theta};
use tst_core::state_space::{StateId, StateRecord, StateSpace};

/// The six statistics by direct enumeration over pairs and triples.
pub fn naive_stats(g: &Graph, b1: &[u8], b2: &[u8]) -> [u32; 6] {
    let n = g.n();
    let adj = |i: usize, j: usize| g.adjacent(i, j);
    let mut t = [0u32; 6];
    for i in 0..n {
        for j in i + 1..n {
            if adj(i, j) {
                t[0] += 1;
                t[2] += (b1[i] == b1[j]) as u32;
                t[3] += (b2[i] == b2[j]) as u32;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in i + 1..n {
                if i != k && j != k && adj(k, i) && adj(k, j) {
                    t[1] += 1;
                }
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if adj(i, j) && adj(j, k) && adj(i, k) {
                    t[4] += (b1[i] == b1[j] && b1[j] == b1[k]) as u32;
                    t[5] += (b2[i] == b2[j] && b2[j] == b2[k]) as u32;
                }
            }
        }
    }
    t
}

pub fn random_bits<R: Rng>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

/// Graph with a random density drawn per graph, so sparse and dense graphs
/// are both common.
pub fn random_graph<R: Rng>(n: usize, rng: &mut R) -> Graph {
    let p: f64 = rng.random();
    let mut g = Graph::empty(n);
    for d in Dyad::all(n) {
        if rng.random_bool(p) {
            g.toggle(d).unwrap();
        }
    }
    g
}

/// Bit `k` of the code is set iff the `k`-th dyad (in `Dyad::all` order) is an edge.
pub fn graph_code(g: &Graph) -> usize {
    Dyad::all(g.n())
        .enumerate()
        .filter(|(_, d)| g.has_edge(*d))
        .map(|(k, _)| 1usize << k)
        .sum()
}

pub fn graph_from_code(n: usize, code: usize) -> Graph {
    let mut g = Graph::empty(n);
    for (k, d) in Dyad::all(n).enumerate() {
        if code >> k & 1 == 1 {
            g.toggle(d).unwrap();
        }
    }
    g
}

/// `exp(q(y)) / Z` for every graph on `n` nodes, indexed by [`graph_code`].
pub fn exact_distribution(theta: &Theta, a: &NodeAttributeTable) -> Vec<f64> {
    let n = a.n();
    let dyads = n * (n - 1) / 2;
    let b1: Vec<u8> = (0..n).map(|i| a.value(tst_core::Attr::B1, i)).collect();
    let b2: Vec<u8> = (0..n).map(|i| a.value(tst_core::Attr::B2, i)).collect();
    let q: Vec<f64> = (0..1usize << dyads)
        .map(|c| {
            let s = StatVector::from_array(naive_stats(&graph_from_code(n, c), &b1, &b2));
            potential(theta, &s)
        })
        .collect();
    let qmax = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|v| (v - qmax).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let z: f64 = weights.iter().sum();
    weights.iter().map(|w| w / z).collect()
}

/// A finalized space with `logp` set directly, for path-search tests.
/// States are told apart by their edge count.
pub fn space_with_logp(logp: &[f64], edges: &[(StateId, StateId)]) -> StateSpace {
    let records = logp
        .iter()
        .enumerate()
        .map(|(k, &lp)| StateRecord {
            id: k as StateId,
            stats: StatVector::from_array([k as u32, 0, 0, 0, 0, 0]),
            count: 1,
            q: 0.0,
            logp: lp,
        })
        .collect();
    StateSpace::from_parts(Theta::ZERO, records, edges.iter().copied()).unwrap()
}

/// Random connected undirected graph on `n` vertices: a random spanning
/// tree plus each remaining pair with probability `extra`.
pub fn random_connected<R: Rng>(n: usize, extra: f64, rng: &mut R) -> Vec<(StateId, StateId)> {
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u as StateId, v as StateId));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(extra) {
                edges.insert((u as StateId, v as StateId));
            }
        }
    }
    edges.into_iter().collect()
}

/// Every simple path from `s` to `t`, by depth-first enumeration.
pub fn all_simple_paths(n: usize, edges: &[(StateId, StateId)], s: StateId, t: StateId) -> Vec<Vec<StateId>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    fn go(adj: &[Vec<StateId>], t: StateId, path: &mut Vec<StateId>, on: &mut Vec<bool>, out: &mut Vec<Vec<StateId>>) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for &v in &adj[u as usize] {
            if !on[v as usize] {
                on[v as usize] = true;
                path.push(v);
                go(adj, t, path, on, out);
                path.pop();
                on[v as usize] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut on = vec![false; n];
    on[s as usize] = true;
    go(&adj, t, &mut vec![s], &mut on, &mut out);
    out
}

/// The simple path maximizing the summed log probability, found by trying
/// every simple path.
pub fn exhaustive_max_prob_path(
    logp: &[f64],
    edges: &[(StateId, StateId)],
    s: StateId,
    t: StateId,
) -> Option<(f64, Vec<StateId>)> {
    all_simple_paths(logp.len(), edges, s, t)
        .into_iter()
        .map(|p| (p.iter().map(|&v| logp[v as usize]).sum::<f64>(), p))
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
}

/// Shortest source-to-target path in the digraph of consecutive moves of
/// `walk`, by enumerating all simple paths. Among shortest paths the one
/// whose sequence of first-visit ranks is lexicographically smallest wins.
pub fn brute_force_prune(walk: &[u32]) -> Vec<u32> {
    let mut rank: HashMap<u32, usize> = HashMap::new();
    for &s in walk {
        let next = rank.len();
        rank.entry(s).or_insert(next);
    }
    let n = rank.len();
    let mut arcs: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for w in walk.windows(2) {
        if w[0] != w[1] {
            arcs.entry(rank[&w[0]]).or_default().insert(rank[&w[1]]);
        }
    }
    let target = rank[walk.last().unwrap()];
    let mut best: Option<Vec<usize>> = None;
    let mut stack = vec![vec![0usize]];
    while let Some(path) = stack.pop() {
        let u = *path.last().unwrap();
        if u == target {
            let better = match &best {
                None => true,
                Some(b) => (path.len(), &path) < (b.len(), b),
            };
            if better {
                best = Some(path);
            }
            continue;
        }
        if path.len() >= n {
            continue;
        }
        for &v in arcs.get(&u).into_iter().flatten() {
            if !path.contains(&v) {
                let mut next = path.clone();
                next.push(v);
                stack.push(next);
            }
        }
    }
    let by_rank: HashMap<usize, u32> = rank.iter().map(|(&s, &r)| (r, s)).collect();
    best.unwrap().into_iter().map(|r| by_rank[&r]).collect()
}

/// A random walk on the undirected graph `edges` from `s` until it first
/// hits `t`.
pub fn random_walk<R: Rng>(n: usize, edges: &[(StateId, StateId)], s: StateId, t: StateId, rng: &mut R) -> Vec<u32> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    let mut walk = vec![s];
    let mut u = s;
    while u != t {
        let nb = &adj[u as usize];
        u = nb[rng.random_range(0..nb.len())];
        walk.push(u);
    }
    walk
}
