//! Reduction of simulated walks to change paths, their classification against
//! the maximum state probability change path, alignment along the change
//! coordinate, and length summaries.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::change_path::{ChangePath, PathState};
use crate::egp::Trajectory;
use crate::error::AnalysisError;
use crate::potential::{potential, StatVector};
use crate::state_space::StateSpace;

/// Fewest-hop path from the first to the last element of `walk` in the
/// digraph of observed consecutive moves. Ties go to successors visited
/// earlier in the walk.
pub fn prune_walk<T: Copy + Eq + Hash>(walk: &[T]) -> Result<Vec<T>, AnalysisError> {
    let (first, last) = match (walk.first(), walk.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(AnalysisError::EmptyInput),
    };
    let mut order: Vec<T> = Vec::new();
    let mut index: HashMap<T, usize> = HashMap::new();
    let mut node = |s: T, order: &mut Vec<T>| {
        *index.entry(s).or_insert_with(|| {
            order.push(s);
            order.len() - 1
        })
    };
    let mut succ: Vec<Vec<usize>> = Vec::new();
    let mut prev = node(first, &mut order);
    succ.push(Vec::new());
    for &s in &walk[1..] {
        let v = node(s, &mut order);
        if v == succ.len() {
            succ.push(Vec::new());
        }
        if v != prev {
            succ[prev].push(v);
        }
        prev = v;
    }
    for list in &mut succ {
        list.sort_unstable();
        list.dedup();
    }
    let goal = index[&last];
    let mut parent: Vec<Option<usize>> = vec![None; order.len()];
    let mut seen = vec![false; order.len()];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        if u == goal {
            break;
        }
        for &v in &succ[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    if !seen[goal] {
        return Err(AnalysisError::MalformedTrajectory);
    }
    let mut path = vec![order[goal]];
    let mut at = goal;
    while let Some(p) = parent[at] {
        path.push(order[p]);
        at = p;
    }
    path.reverse();
    Ok(path)
}

/// A change path over `stats`, with ids and log probabilities taken from
/// `space` where the state was observed there.
pub fn path_from_stats(space: &StateSpace, stats: &[StatVector]) -> ChangePath {
    let states = stats
        .iter()
        .map(|s| {
            let rec = space.by_stats(s);
            PathState {
                id: rec.map(|r| r.id),
                stats: *s,
                q: potential(space.theta(), s),
                logp: rec.map_or(f64::NAN, |r| r.logp),
            }
        })
        .collect();
    ChangePath::new(states)
}

/// The change path underlying a walk from `source` to `target`.
pub fn prune_to_path(
    traj: &Trajectory,
    source: &StatVector,
    target: &StatVector,
    space: &StateSpace,
) -> Result<ChangePath, AnalysisError> {
    let states = traj.states();
    if states.first() != Some(source) || states.last() != Some(target) {
        return Err(AnalysisError::MalformedTrajectory);
    }
    Ok(path_from_stats(space, &prune_walk(&states)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLabel {
    Primary,
    Secondary,
}

impl PathLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PathLabel::Primary => "primary",
            PathLabel::Secondary => "secondary",
        }
    }
}

impl std::fmt::Display for PathLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification of a path with the evidence it rests on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathClass {
    pub label: PathLabel,
    /// First path index minimizing `|t_m1 - t_m2|`.
    pub neutral_index: usize,
    pub neutral_edges: u32,
    /// Midpoint between the source edge count and the largest edge count on
    /// the reference path.
    pub tau: f64,
}

/// Labels `path` primary when its edge count at the polarization-neutral
/// point reaches halfway from the source density to the peak density of
/// `reference`.
pub fn classify_path(path: &ChangePath, reference: &ChangePath) -> Result<PathClass, AnalysisError> {
    let first = reference.states.first().ok_or(AnalysisError::EmptyInput)?;
    let peak = reference.stats().map(|s| s.t_e).max().unwrap_or(first.stats.t_e);
    let tau = (peak as f64 + first.stats.t_e as f64) / 2.0;
    let (neutral_index, st) = path
        .states
        .iter()
        .enumerate()
        .min_by_key(|(k, s)| (s.stats.polarization().unsigned_abs(), *k))
        .ok_or(AnalysisError::EmptyInput)?;
    let neutral_edges = st.stats.t_e;
    let label = if neutral_edges as f64 >= tau {
        PathLabel::Primary
    } else {
        PathLabel::Secondary
    };
    Ok(PathClass {
        label,
        neutral_index,
        neutral_edges,
        tau,
    })
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes with
/// shape-preserving end conditions).
#[derive(Clone, Debug, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing and as long as `y`, with at least one point.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, AnalysisError> {
        if x.len() != y.len() {
            return Err(AnalysisError::Dimension {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.is_empty() {
            return Err(AnalysisError::EmptyInput);
        }
        let n = x.len();
        if n == 1 {
            return Ok(Pchip { x, y, d: vec![0.0] });
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Ok(Pchip { x, y, d });
        }
        for k in 1..n - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            if a * b > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
            let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
            if d.signum() != m0.signum() || m0 == 0.0 {
                0.0
            } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
                3.0 * m0
            } else {
                d
            }
        };
        d[0] = end(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Pchip { x, y, d })
    }

    /// Interpolant through `y` at evenly spaced coordinates on `[0, 1]`.
    pub fn uniform(y: Vec<f64>) -> Result<Self, AnalysisError> {
        let x = crate::change_path::change_coordinate(y.len());
        Pchip::new(x, y)
    }

    /// Value at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// Smallest spacing kept between consecutive warp knot values.
pub const KNOT_GAP: f64 = 1e-6;

/// Monotone piecewise-linear map of `[0, 1]` onto itself with knots at
/// `k / (K + 1)`; `values[k]` is the image of knot `k`, endpoints pinned.
#[derive(Clone, Debug, PartialEq)]
pub struct Warp {
    values: Vec<f64>,
}

impl Warp {
    pub fn identity(interior: usize) -> Self {
        Warp {
            values: crate::change_path::change_coordinate(interior + 2),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn step(&self) -> f64 {
        1.0 / (self.values.len() - 1) as f64
    }

    /// Image of an original coordinate.
    pub fn forward(&self, u: f64) -> f64 {
        let m = self.values.len() - 1;
        let pos = (u.clamp(0.0, 1.0) * m as f64).min(m as f64);
        let k = (pos.floor() as usize).min(m - 1);
        let f = pos - k as f64;
        self.values[k] + f * (self.values[k + 1] - self.values[k])
    }

    /// Original coordinate mapped to the warped coordinate `g`.
    pub fn inverse(&self, g: f64) -> f64 {
        let g = g.clamp(0.0, 1.0);
        let m = self.values.len() - 1;
        let k = (self.values.partition_point(|&v| v <= g).max(1) - 1).min(m - 1);
        let span = self.values[k + 1] - self.values[k];
        let f = ((g - self.values[k]) / span).clamp(0.0, 1.0);
        (k as f64 + f) * self.step()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] > w[0])
    }
}

/// One path resampled on the common grid through its warp.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedCurve {
    pub grid: Vec<f64>,
    pub q: Vec<f64>,
    pub stats: Vec<[f64; 6]>,
    pub warp: Warp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignOptions {
    pub grid: usize,
    pub knots: usize,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            grid: 201,
            knots: 9,
            max_sweeps: 100,
            tol: 1e-6,
        }
    }
}

/// Result of [`align`]: curves plus the objective before and after.
#[derive(Clone, Debug)]
pub struct Alignment {
    pub curves: Vec<AlignedCurve>,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub sweeps: usize,
}

struct Profile {
    q: Pchip,
    stats: [Pchip; 6],
}

impl Profile {
    fn new(path: &ChangePath) -> Result<Self, AnalysisError> {
        let col = |k: usize| path.stats().map(|s| s.to_array()[k] as f64).collect::<Vec<_>>();
        Ok(Profile {
            q: Pchip::uniform(path.q())?,
            stats: [
                Pchip::uniform(col(0))?,
                Pchip::uniform(col(1))?,
                Pchip::uniform(col(2))?,
                Pchip::uniform(col(3))?,
                Pchip::uniform(col(4))?,
                Pchip::uniform(col(5))?,
            ],
        })
    }

    fn q_on(&self, warp: &Warp, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&g| self.q.eval(warp.inverse(g))).collect()
    }

    fn curve(&self, warp: &Warp, grid: &[f64]) -> AlignedCurve {
        let u: Vec<f64> = grid.iter().map(|&g| warp.inverse(g)).collect();
        AlignedCurve {
            grid: grid.to_vec(),
            q: u.iter().map(|&t| self.q.eval(t)).collect(),
            stats: u
                .iter()
                .map(|&t| std::array::from_fn(|k| self.stats[k].eval(t)))
                .collect(),
            warp: warp.clone(),
        }
    }
}

fn pointwise_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let sse: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sse / a.len() as f64).sqrt()
}

fn mean_rmse(qs: &[Vec<f64>], mean: &[f64]) -> f64 {
    qs.iter().map(|q| rmse(q, mean)).sum::<f64>() / qs.len() as f64
}

const GOLDEN_STEPS: usize = 40;

/// One coordinate-descent pass over the interior knots of `warp` against a
/// fixed `mean`. Each knot moves only if that lowers the squared error.
fn improve_warp(profile: &Profile, warp: &Warp, grid: &[f64], mean: &[f64]) -> Warp {
    let mut w = warp.clone();
    let last = (grid.len() - 1) as f64;
    let m = w.values.len() - 1;
    for k in 1..m {
        let (left, right) = (w.values[k - 1], w.values[k + 1]);
        let (lo, hi) = (left + KNOT_GAP, right - KNOT_GAP);
        if hi <= lo {
            continue;
        }
        // only grid points between the neighbouring knots depend on this one
        let i0 = (left * last).ceil().max(0.0) as usize;
        let i1 = ((right * last).floor() as usize).min(grid.len() - 1);
        let current = w.values[k];
        let mut trial = w.clone();
        let mut local = |x: f64| {
            trial.values[k] = x;
            (i0..=i1)
                .map(|i| {
                    let e = profile.q.eval(trial.inverse(grid[i])) - mean[i];
                    e * e
                })
                .sum::<f64>()
        };
        let mut best = (local(current), current);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (local(c), local(d));
        for _ in 0..GOLDEN_STEPS {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = local(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = local(d);
            }
        }
        for (f, x) in [(fc, c), (fd, d)] {
            if f < best.0 {
                best = (f, x);
            }
        }
        w.values[k] = best.1;
    }
    w
}

/// Warps every path so its potential profile best matches the cross-path
/// mean, by block coordinate descent with the mean recomputed after each
/// sweep. A sweep that would raise the mean RMSE is discarded and ends the
/// search, so the result is never worse than the identity warps.
pub fn align(paths: &[ChangePath], opts: &AlignOptions) -> Result<Alignment, AnalysisError> {
    if paths.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if opts.grid < 2 {
        return Err(AnalysisError::Dimension {
            expected: 2,
            found: opts.grid,
        });
    }
    let grid = crate::change_path::change_coordinate(opts.grid);
    let profiles = paths.iter().map(Profile::new).collect::<Result<Vec<_>, _>>()?;
    let mut warps = vec![Warp::identity(opts.knots); paths.len()];
    let qs: Vec<Vec<f64>> = profiles.iter().map(|p| p.q_on(&warps[0], &grid)).collect();
    let mut mean = pointwise_mean(&qs);
    let before = mean_rmse(&qs, &mean);
    let mut current = before;
    let mut sweeps = 0;
    if paths.len() > 1 {
        for _ in 0..opts.max_sweeps {
            let next: Vec<Warp> = profiles
                .par_iter()
                .zip(warps.par_iter())
                .map(|(p, w)| improve_warp(p, w, &grid, &mean))
                .collect();
            let next_qs: Vec<Vec<f64>> = profiles.iter().zip(&next).map(|(p, w)| p.q_on(w, &grid)).collect();
            let next_mean = pointwise_mean(&next_qs);
            let value = mean_rmse(&next_qs, &next_mean);
            if value > current {
                break;
            }
            let gain = current - value;
            warps = next;
            mean = next_mean;
            current = value;
            sweeps += 1;
            if gain < opts.tol {
                break;
            }
        }
    }
    debug_assert!(current <= before);
    debug_assert!(warps.iter().all(Warp::is_strictly_increasing));
    let curves = profiles.iter().zip(&warps).map(|(p, w)| p.curve(w, &grid)).collect();
    Ok(Alignment {
        curves,
        rmse_before: before,
        rmse_after: current,
        sweeps,
    })
}

/// Pointwise mean of potentials and of per-curve max-normalized statistics.
pub fn mean_curves(curves: &[AlignedCurve]) -> Result<AlignedCurve, AnalysisError> {
    let first = curves.first().ok_or(AnalysisError::EmptyInput)?;
    let g = first.grid.len();
    if let Some(bad) = curves
        .iter()
        .find(|c| c.grid.len() != g || c.q.len() != g || c.stats.len() != g)
    {
        return Err(AnalysisError::Dimension {
            expected: g,
            found: bad.grid.len().min(bad.q.len()).min(bad.stats.len()),
        });
    }
    let n = curves.len() as f64;
    let normalized: Vec<Vec<[f64; 6]>> = curves
        .iter()
        .map(|c| crate::change_path::normalize_columns(&c.stats))
        .collect();
    let q = (0..g).map(|i| curves.iter().map(|c| c.q[i]).sum::<f64>() / n).collect();
    let stats = (0..g)
        .map(|i| std::array::from_fn(|k| normalized.iter().map(|c| c[i][k]).sum::<f64>() / n))
        .collect();
    Ok(AlignedCurve {
        grid: first.grid.clone(),
        q,
        stats,
        warp: Warp::identity(first.warp.values.len().saturating_sub(2)),
    })
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles and McGill notch `median +- 1.57 IQR / sqrt(n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub notch_lo: f64,
    pub notch_hi: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let half = 1.57 * (q3 - q1) / (v.len() as f64).sqrt();
    Ok(Summary {
        n: v.len(),
        median,
        q1,
        q3,
        notch_lo: median - half,
        notch_hi: median + half,
    })
}

/// Length summaries for one process; lengths count toggles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthStats {
    pub walk: Summary,
    pub path: Summary,
    /// Per-trajectory walk length over path length.
    pub ratio: Summary,
}

pub fn length_stats(trajs: &[Trajectory], paths: &[ChangePath]) -> Result<LengthStats, AnalysisError> {
    if trajs.len() != paths.len() {
        return Err(AnalysisError::Dimension {
            expected: trajs.len(),
            found: paths.len(),
        });
    }
    let walk: Vec<f64> = trajs.iter().map(|t| t.len() as f64).collect();
    let path: Vec<f64> = paths.iter().map(|p| p.len().saturating_sub(1) as f64).collect();
    let ratio: Vec<f64> = walk
        .iter()
        .zip(&path)
        .filter(|(_, p)| **p > 0.0)
        .map(|(w, p)| w / p)
        .collect();
    Ok(LengthStats {
        walk: summarize(&walk)?,
        path: summarize(&path)?,
        ratio: summarize(&ratio)?,
    })
}
