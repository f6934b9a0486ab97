//! Sufficient statistics and the linear graph potential of the faction model.
//!
//! The six statistics are the edge count, the 2-star count, nodematch counts
//! on each attribute, and counts of triangles whose three nodes all share a
//! value on each attribute. The potential is `theta . t(y)` with respect to
//! counting measure.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::GraphError;
use crate::graph::{Attr, Dyad, Graph, NodeAttributeTable};

/// Coefficients of the six model terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theta {
    pub edge: f64,
    pub twostar: f64,
    pub match_b1: f64,
    pub match_b2: f64,
    pub tri_b1: f64,
    pub tri_b2: f64,
}

impl Theta {
    pub const ZERO: Theta = Theta {
        edge: 0.0,
        twostar: 0.0,
        match_b1: 0.0,
        match_b2: 0.0,
        tri_b1: 0.0,
        tri_b2: 0.0,
    };

    pub fn from_array(a: [f64; 6]) -> Self {
        Theta {
            edge: a[0],
            twostar: a[1],
            match_b1: a[2],
            match_b2: a[3],
            tri_b1: a[4],
            tri_b2: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.edge,
            self.twostar,
            self.match_b1,
            self.match_b2,
            self.tri_b1,
            self.tri_b2,
        ]
    }

    pub fn scaled(self, factor: f64) -> Self {
        Theta::from_array(self.to_array().map(|v| v * factor))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Exact sufficient-statistic vector identifying a state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatVector {
    pub t_e: u32,
    pub t_2s: u32,
    pub t_m1: u32,
    pub t_m2: u32,
    pub t_d1: u32,
    pub t_d2: u32,
}

impl StatVector {
    pub const NAMES: [&'static str; 6] = ["t_e", "t_2s", "t_m1", "t_m2", "t_d1", "t_d2"];

    pub fn from_array(a: [u32; 6]) -> Self {
        StatVector {
            t_e: a[0],
            t_2s: a[1],
            t_m1: a[2],
            t_m2: a[3],
            t_d1: a[4],
            t_d2: a[5],
        }
    }

    pub fn to_array(self) -> [u32; 6] {
        [self.t_e, self.t_2s, self.t_m1, self.t_m2, self.t_d1, self.t_d2]
    }

    /// Polarization `t_m1 - t_m2`.
    pub fn polarization(&self) -> i64 {
        self.t_m1 as i64 - self.t_m2 as i64
    }

    /// Applies a change-statistic delta. Panics if a count would go negative.
    pub fn apply(self, delta: StatDelta) -> StatVector {
        let a = self.to_array();
        let d = delta.0;
        let mut out = [0u32; 6];
        for k in 0..6 {
            out[k] = u32::try_from(a[k] as i64 + d[k] as i64).expect("statistic underflow");
        }
        StatVector::from_array(out)
    }
}

impl fmt::Display for StatVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {}, {}, {})",
            self.t_e, self.t_2s, self.t_m1, self.t_m2, self.t_d1, self.t_d2
        )
    }
}

impl Sub for StatVector {
    type Output = StatDelta;

    fn sub(self, rhs: StatVector) -> StatDelta {
        let (a, b) = (self.to_array(), rhs.to_array());
        StatDelta(std::array::from_fn(|k| a[k] as i32 - b[k] as i32))
    }
}

impl Add<StatDelta> for StatVector {
    type Output = StatVector;

    fn add(self, rhs: StatDelta) -> StatVector {
        self.apply(rhs)
    }
}

/// Signed change in the statistic vector caused by a single toggle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StatDelta(pub [i32; 6]);

impl StatDelta {
    pub fn neg(self) -> StatDelta {
        StatDelta(self.0.map(|v| -v))
    }
}

/// Computes the six statistics of `g` from scratch.
pub fn stats(g: &Graph, a: &NodeAttributeTable) -> Result<StatVector, GraphError> {
    if g.n() != a.n() {
        return Err(GraphError::Dimension {
            expected: a.n(),
            found: g.n(),
        });
    }
    let mut t = StatVector {
        t_e: g.edge_count() as u32,
        ..Default::default()
    };
    t.t_2s = g.degrees().iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    // each homogeneous triangle is seen once from each of its three edges
    let (mut tri1, mut tri2) = (0u32, 0u32);
    for d in g.edges() {
        let (i, j) = (d.i(), d.j());
        if a.matched(Attr::B1, i, j) {
            t.t_m1 += 1;
            tri1 += g.common_neighbors_in(i, j, a.mask(Attr::B1, a.value(Attr::B1, i)));
        }
        if a.matched(Attr::B2, i, j) {
            t.t_m2 += 1;
            tri2 += g.common_neighbors_in(i, j, a.mask(Attr::B2, a.value(Attr::B2, i)));
        }
    }
    t.t_d1 = tri1 / 3;
    t.t_d2 = tri2 / 3;
    Ok(t)
}

/// `theta . t`.
pub fn potential(theta: &Theta, t: &StatVector) -> f64 {
    let w = theta.to_array();
    let s = t.to_array();
    w.iter().zip(s).map(|(w, s)| w * s as f64).sum()
}

/// `theta . delta`, the potential difference across a toggle.
pub fn delta_potential(theta: &Theta, delta: &StatDelta) -> f64 {
    let w = theta.to_array();
    w.iter().zip(delta.0).map(|(w, d)| w * d as f64).sum()
}

/// `stats(toggle(g, d)) - stats(g)` in O(n / 64) time.
pub fn change_stats(g: &Graph, a: &NodeAttributeTable, d: Dyad) -> Result<StatDelta, GraphError> {
    if g.n() != a.n() {
        return Err(GraphError::Dimension {
            expected: a.n(),
            found: g.n(),
        });
    }
    if d.j() >= g.n() {
        return Err(GraphError::InvalidDyad {
            i: d.i(),
            j: d.j(),
            n: Some(g.n()),
        });
    }
    Ok(change_stats_unchecked(g, a, d))
}

#[inline]
pub(crate) fn change_stats_unchecked(g: &Graph, a: &NodeAttributeTable, d: Dyad) -> StatDelta {
    let (i, j) = (d.i(), d.j());
    let present = g.has_edge(d);
    let sign: i32 = if present { -1 } else { 1 };
    // degrees on the graph without the edge
    let off = present as u32;
    let two_star = (g.degree(i) - off + g.degree(j) - off) as i32;
    let mut out = [sign, sign * two_star, 0, 0, 0, 0];
    if a.matched(Attr::B1, i, j) {
        out[2] = sign;
        out[4] = sign * g.common_neighbors_in(i, j, a.mask(Attr::B1, a.value(Attr::B1, i))) as i32;
    }
    if a.matched(Attr::B2, i, j) {
        out[3] = sign;
        out[5] = sign * g.common_neighbors_in(i, j, a.mask(Attr::B2, a.value(Attr::B2, i))) as i32;
    }
    StatDelta(out)
}

/// The model coefficients reported for the faction study, with the 2-star
/// coefficient carrying the sign its description requires (see README).
pub const FACTION_THETA: Theta = Theta {
    edge: -6.0,
    twostar: -0.1,
    match_b1: 4.0,
    match_b2: 4.0,
    tri_b1: 1.0,
    tri_b2: 1.0,
};

/// The coefficients exactly as printed, with a positive 2-star term.
pub const FACTION_THETA_AS_PRINTED: Theta = Theta {
    edge: -6.0,
    twostar: 0.1,
    match_b1: 4.0,
    match_b2: 4.0,
    tri_b1: 1.0,
    tri_b2: 1.0,
};
