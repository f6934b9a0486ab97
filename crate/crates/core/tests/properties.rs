//! Property tests for the model, state space, path search, simulation and
//! analysis invariants.

mod common;

use proptest::collection::vec;
use proptest::prelude::*;
use tst_core::analysis::{align, classify_path, prune_to_path, prune_walk, summarize, AlignOptions, Pchip};
use tst_core::change_path::{min_node_cost_path, PathState};
use tst_core::egp::{move_rate, simulate, simulate_until_target, EgpKind, EgpSimulator, EgpVariant, Trajectory};
use tst_core::graph::{Dyad, Graph, NodeAttributeTable};
use tst_core::potential::{change_stats, stats, StatVector, Theta};
use tst_core::rng::{stream, Purpose};
use tst_core::{mspcp, ChangePath, PathWeight, StateSpace};

use common::*;

fn graph_and_attrs() -> impl Strategy<Value = (Graph, Vec<u8>, Vec<u8>)> {
    (2usize..=24).prop_flat_map(|n| {
        (vec(any::<bool>(), n * (n - 1) / 2), vec(0u8..2, n), vec(0u8..2, n)).prop_map(move |(bits, b1, b2)| {
            let edges = Dyad::all(n).zip(bits).filter(|(_, b)| *b).map(|(d, _)| (d.i(), d.j()));
            (Graph::from_edges(n, edges).unwrap(), b1, b2)
        })
    })
}

fn theta() -> impl Strategy<Value = Theta> {
    proptest::array::uniform6(-2.0f64..2.0).prop_map(Theta::from_array)
}

fn kind() -> impl Strategy<Value = EgpKind> {
    (0usize..4, 0.05f64..3.0).prop_map(|(k, nu)| EgpKind::new(EgpVariant::ALL[k], nu))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn toggle_is_an_involution((g, _, _) in graph_and_attrs(), pick in any::<prop::sample::Index>()) {
        let n = g.n();
        let d = Dyad::from_index(n, pick.index(Dyad::count(n)));
        let mut h = g.clone();
        h.toggle(d).unwrap();
        prop_assert_eq!(h.has_edge(d), !g.has_edge(d));
        prop_assert_eq!(h.hamming(&g), 1);
        h.toggle(d).unwrap();
        prop_assert_eq!(h, g);
    }

    #[test]
    fn stats_match_enumeration((g, b1, b2) in graph_and_attrs()) {
        let a = NodeAttributeTable::new(b1.clone(), b2.clone()).unwrap();
        prop_assert_eq!(stats(&g, &a).unwrap().to_array(), naive_stats(&g, &b1, &b2));
    }

    #[test]
    fn change_stats_are_stat_differences((g, b1, b2) in graph_and_attrs(), pick in any::<prop::sample::Index>()) {
        let a = NodeAttributeTable::new(b1, b2).unwrap();
        let n = g.n();
        let d = Dyad::from_index(n, pick.index(Dyad::count(n)));
        let before = stats(&g, &a).unwrap();
        let after = stats(&g.toggled(d).unwrap(), &a).unwrap();
        prop_assert_eq!(before.apply(change_stats(&g, &a, d).unwrap()), after);
    }

    #[test]
    fn detailed_balance_holds_for_every_law(kind in kind(), dq in -30.0f64..30.0) {
        // adding with potential gain dq is undone by a removal with gain -dq
        for adding in [true, false] {
            let ratio = move_rate(kind, dq, adding) / move_rate(kind, -dq, !adding);
            prop_assert!((ratio / dq.exp() - 1.0).abs() < 1e-12);
        }
    }
}

fn visits() -> impl Strategy<Value = Vec<([u32; 2], u64)>> {
    vec((proptest::array::uniform2(0u32..4), 1u64..5), 0..12)
}

fn space_from(v: &[([u32; 2], u64)]) -> StateSpace {
    let mut s = StateSpace::new(Theta::ZERO);
    let sv = |k: [u32; 2]| StatVector::from_array([k[0], k[1], 0, 0, 0, 0]);
    for w in v.windows(2) {
        s.record_transition(&sv(w[0].0), &sv(w[1].0));
    }
    for (k, times) in v {
        s.accumulate_n(&sv(*k), *times);
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merge_is_associative_and_commutative(a in visits(), b in visits(), c in visits()) {
        let (a, b, c) = (space_from(&a), space_from(&b), space_from(&c));
        let mut left = a.clone();
        left.merge(&b);
        left.merge(&c);
        let mut bc = b.clone();
        bc.merge(&c);
        let mut right = a.clone();
        right.merge(&bc);
        prop_assert!(left.same_content(&right));
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        prop_assert!(ab.same_content(&ba));
    }

    #[test]
    fn finalized_probabilities_sum_to_one(a in visits()) {
        let mut s = space_from(&a);
        prop_assume!(!s.is_empty());
        s.finalize_probs().unwrap();
        let total: f64 = s.records().iter().map(|r| r.logp.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mspcp_matches_exhaustive_search(n in 2usize..=9, extra in 0.0f64..0.6, seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Test, 0);
        let edges = random_connected(n, extra, &mut rng);
        let logp: Vec<f64> = (0..n).map(|_| -5.0 * rand::Rng::random::<f64>(&mut rng) - 1e-3).collect();
        let space = space_with_logp(&logp, &edges);
        let t = (n - 1) as u32;
        let found = mspcp(&space, 0, t, PathWeight::Logp).unwrap();
        let ids: Vec<u32> = found.ids().into_iter().map(Option::unwrap).collect();
        let (best, path) = exhaustive_max_prob_path(&logp, &edges, 0, t).unwrap();
        let value: f64 = ids.iter().map(|&v| logp[v as usize]).sum();
        prop_assert!((value - best).abs() < 1e-9);
        prop_assert_eq!(ids, path);
    }

    #[test]
    fn equal_costs_break_ties_lexicographically(n in 2usize..=8, extra in 0.0f64..0.7, seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Test, 1);
        let edges = random_connected(n, extra, &mut rng);
        let cost = vec![1.0; n];
        let adj = |u: u32| {
            edges.iter().filter_map(move |&(a, b)| if a == u { Some(b) } else if b == u { Some(a) } else { None })
        };
        let t = (n - 1) as u32;
        let found = min_node_cost_path(n, adj, &cost, 0, t).unwrap();
        let expected = all_simple_paths(n, &edges, 0, t)
            .into_iter()
            .min_by(|a, b| (a.len(), a).cmp(&(b.len(), b)))
            .unwrap();
        prop_assert_eq!(found, expected);
    }

    #[test]
    fn pruning_matches_brute_force(n in 2usize..=8, extra in 0.0f64..0.6, seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Test, 2);
        let edges = random_connected(n, extra, &mut rng);
        let walk = random_walk(n, &edges, 0, (n - 1) as u32, &mut rng);
        let pruned = prune_walk(&walk).unwrap();
        prop_assert_eq!(&pruned, &brute_force_prune(&walk));
        prop_assert_eq!(pruned.first(), walk.first());
        prop_assert_eq!(pruned.last(), walk.last());
        let mut distinct = pruned.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), pruned.len());
        for w in pruned.windows(2) {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            prop_assert!(edges.contains(&(a, b)));
        }
    }
}

fn q_path(q: &[f64]) -> ChangePath {
    ChangePath::new(
        q.iter()
            .map(|&q| PathState {
                id: None,
                stats: StatVector::default(),
                q,
                logp: f64::NAN,
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alignment_descends_and_keeps_warps_monotone(profiles in vec(vec(-5.0f64..5.0, 2..14), 2..5)) {
        let paths: Vec<ChangePath> = profiles.iter().map(|q| q_path(q)).collect();
        let opts = AlignOptions { grid: 51, knots: 5, ..AlignOptions::default() };
        let al = align(&paths, &opts).unwrap();
        prop_assert!(al.rmse_after <= al.rmse_before);
        for c in &al.curves {
            let v = c.warp.values();
            prop_assert_eq!(v[0], 0.0);
            prop_assert_eq!(v[v.len() - 1], 1.0);
            prop_assert!(v.windows(2).all(|w| w[1] - w[0] >= 1e-6 * 0.999));
            prop_assert_eq!(c.grid.len(), 51);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pchip_stays_monotone(steps in vec(0.0f64..3.0, 1..12), t in vec(0.0f64..=1.0, 20)) {
        let mut y = vec![0.0];
        for s in &steps {
            y.push(y.last().unwrap() + s);
        }
        let p = Pchip::uniform(y.clone()).unwrap();
        let mut ts = t.clone();
        ts.sort_by(f64::total_cmp);
        let vals: Vec<f64> = ts.iter().map(|&x| p.eval(x)).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        prop_assert!(vals.iter().all(|&v| v >= -1e-12 && v <= y[y.len() - 1] + 1e-12));
    }

    #[test]
    fn summaries_are_ordered(values in vec(-1e3f64..1e3, 1..40)) {
        let s = summarize(&values).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= hi);
        prop_assert!((s.median - s.notch_lo - (s.notch_hi - s.median)).abs() < 1e-9);
    }
}

/// A four-node model whose source and target are both easy to reach.
fn small_model() -> (NodeAttributeTable, Theta) {
    (
        NodeAttributeTable::faction_design(4).unwrap(),
        Theta::from_array([-0.5, 0.1, 0.5, 0.5, 0.2, 0.2]),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn simulated_states_track_the_graph(kind in kind(), theta in theta(), code in 0usize..64, seed in any::<u64>()) {
        let a = NodeAttributeTable::faction_design(4).unwrap();
        let g0 = graph_from_code(4, code);
        let mut rng = stream(seed, Purpose::Test, 3);
        let traj = match simulate(kind, g0.clone(), &theta, &a, |_, _| false, 300, &mut rng) {
            Err(tst_core::error::EgpError::BudgetExhausted { partial, .. }) => *partial,
            other => panic!("unexpected {other:?}"),
        };
        let mut g = g0;
        let mut last = traj.t0;
        for e in &traj.events {
            prop_assert!(e.time > last);
            last = e.time;
            let before = g.clone();
            g.toggle(e.dyad).unwrap();
            prop_assert_eq!(g.hamming(&before), 1);
            prop_assert_eq!(stats(&g, &a).unwrap(), e.stats);
        }
    }

    #[test]
    fn truncated_walks_leave_the_source_once(kind in kind(), seed in any::<u64>()) {
        let (a, theta) = small_model();
        let source = stats(&Graph::empty(4), &a).unwrap();
        let target = stats(&Graph::complete(4), &a).unwrap();
        let mut rng = stream(seed, Purpose::Test, 4);
        let traj = simulate_until_target(kind, Graph::empty(4), &theta, &a, source, target, 1_000_000, &mut rng).unwrap();
        let states = traj.states();
        prop_assert_eq!(states[0], source);
        prop_assert_eq!(states.iter().filter(|s| **s == source).count(), 1);
        prop_assert_eq!(*states.last().unwrap(), target);
        prop_assert_eq!(traj.graph_at(traj.len()).unwrap(), Graph::complete(4));
    }

    #[test]
    fn classification_ignores_time_scale(kind in kind(), seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (a, theta) = small_model();
        let source = stats(&Graph::empty(4), &a).unwrap();
        let target = stats(&Graph::complete(4), &a).unwrap();
        let mut rng = stream(seed, Purpose::Test, 5);
        let traj = simulate_until_target(kind, Graph::empty(4), &theta, &a, source, target, 1_000_000, &mut rng).unwrap();
        let mut scaled: Trajectory = traj.clone();
        scaled.t0 *= scale;
        for e in &mut scaled.events {
            e.time *= scale;
        }
        let space = StateSpace::new(theta);
        let p1 = prune_to_path(&traj, &source, &target, &space).unwrap();
        let p2 = prune_to_path(&scaled, &source, &target, &space).unwrap();
        prop_assert_eq!(&p1.stats().collect::<Vec<_>>(), &p2.stats().collect::<Vec<_>>());
        let reference = p1.clone();
        prop_assert_eq!(classify_path(&p1, &reference).unwrap(), classify_path(&p2, &reference).unwrap());
    }
}

#[test]
fn frozen_holding_times_are_exponential() {
    // first-event times from one fixed graph, compared with Exp(total rate)
    // by a Kolmogorov-Smirnov test at the 0.1% level
    let a = NodeAttributeTable::faction_design(8).unwrap();
    let theta = Theta::from_array([-1.0, 0.05, 0.5, 0.5, 0.3, 0.3]);
    let g = graph_from_code(8, 0x000F_0F33_55A5);
    for (k, &variant) in EgpVariant::ALL.iter().enumerate() {
        let kind = EgpKind::new(variant, 0.5);
        let total = EgpSimulator::new(kind, g.clone(), theta, &a).total_rate();
        let mut rng = stream(9, Purpose::Test, 100 + k as u64);
        let mut times: Vec<f64> = (0..4000)
            .map(|_| {
                let mut sim = EgpSimulator::new(kind, g.clone(), theta, &a);
                sim.step(&mut rng).unwrap().time
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let n = times.len() as f64;
        let d = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let f = 1.0 - (-total * t).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.95 / n.sqrt(), "{variant}: KS statistic {d}");
    }
}
