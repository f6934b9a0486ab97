//! Undirected simple graphs on labeled nodes, with per-node binary attributes.
//!
//! Adjacency is kept as dense bit rows plus a degree array, so a toggle is
//! O(1) and common-neighbour counts reduce to a few popcounts.

use std::fmt;

use crate::error::GraphError;

const WORD: usize = 64;

fn words_for(n: usize) -> usize {
    n.div_ceil(WORD).max(1)
}

/// An unordered node pair, stored canonically with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dyad {
    i: u32,
    j: u32,
}

impl Dyad {
    /// Builds a canonical dyad from two distinct node indices in either order.
    pub fn new(a: usize, b: usize) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::InvalidDyad { i: a, j: b, n: None });
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        Ok(Dyad {
            i: i as u32,
            j: j as u32,
        })
    }

    #[inline]
    pub fn i(self) -> usize {
        self.i as usize
    }

    #[inline]
    pub fn j(self) -> usize {
        self.j as usize
    }

    /// Number of dyads on `n` nodes.
    pub fn count(n: usize) -> usize {
        n * n.saturating_sub(1) / 2
    }

    /// Inverse of [`Dyad::index`]: the `k`-th dyad in row-major upper-triangle order.
    pub fn from_index(n: usize, k: usize) -> Dyad {
        debug_assert!(k < Dyad::count(n));
        let mut rem = k;
        let mut i = 0;
        loop {
            let row = n - 1 - i;
            if rem < row {
                return Dyad {
                    i: i as u32,
                    j: (i + 1 + rem) as u32,
                };
            }
            rem -= row;
            i += 1;
        }
    }

    /// Position of this dyad in row-major upper-triangle order.
    pub fn index(self, n: usize) -> usize {
        let (i, j) = (self.i(), self.j());
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// All dyads on `n` nodes in row-major upper-triangle order.
    pub fn all(n: usize) -> impl Iterator<Item = Dyad> {
        (0..n).flat_map(move |i| {
            ((i + 1)..n).map(move |j| Dyad {
                i: i as u32,
                j: j as u32,
            })
        })
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Undirected simple graph with a fixed node set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    degree: Vec<u32>,
    edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("edges", &self.edge_list())
            .finish()
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        let words = words_for(n);
        Graph {
            n,
            words,
            rows: vec![0; n * words],
            degree: vec![0; n],
            edges: 0,
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::empty(n);
        for d in Dyad::all(n) {
            g.toggle_unchecked(d);
        }
        g
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::empty(n);
        for (a, b) in edges {
            let d = g.dyad(a, b)?;
            if !g.has_edge(d) {
                g.toggle_unchecked(d);
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Validated dyad for this graph's node range.
    pub fn dyad(&self, a: usize, b: usize) -> Result<Dyad, GraphError> {
        if a == b || a >= self.n || b >= self.n {
            return Err(GraphError::InvalidDyad {
                i: a,
                j: b,
                n: Some(self.n),
            });
        }
        Dyad::new(a, b)
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    #[inline]
    pub fn degree(&self, i: usize) -> u32 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degree
    }

    #[inline]
    fn bit(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / WORD] >> (j % WORD) & 1 == 1
    }

    #[inline]
    pub fn has_edge(&self, d: Dyad) -> bool {
        self.bit(d.i(), d.j())
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.bit(a, b)
    }

    /// Bit row of node `i`; bit `k` set iff `i` and `k` are adjacent.
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    /// Toggles `d`, checking it against the node range first.
    pub fn toggle(&mut self, d: Dyad) -> Result<(), GraphError> {
        if d.j() >= self.n {
            return Err(GraphError::InvalidDyad {
                i: d.i(),
                j: d.j(),
                n: Some(self.n),
            });
        }
        self.toggle_unchecked(d);
        Ok(())
    }

    /// Returns a copy of the graph with `d` toggled.
    pub fn toggled(&self, d: Dyad) -> Result<Graph, GraphError> {
        let mut g = self.clone();
        g.toggle(d)?;
        Ok(g)
    }

    #[inline]
    pub(crate) fn toggle_unchecked(&mut self, d: Dyad) {
        let (i, j) = (d.i(), d.j());
        let w = self.words;
        self.rows[i * w + j / WORD] ^= 1 << (j % WORD);
        self.rows[j * w + i / WORD] ^= 1 << (i % WORD);
        if self.bit(i, j) {
            self.degree[i] += 1;
            self.degree[j] += 1;
            self.edges += 1;
        } else {
            self.degree[i] -= 1;
            self.degree[j] -= 1;
            self.edges -= 1;
        }
    }

    /// Number of common neighbours of `a` and `b` that also lie in `mask`.
    /// Whether every adjacency row fits in a single word.
    pub(crate) fn is_narrow(&self) -> bool {
        self.words == 1
    }

    /// Adjacency row of `i` for a narrow graph.
    #[inline]
    pub(crate) fn word_row(&self, i: usize) -> u64 {
        debug_assert!(self.words == 1);
        self.rows[i]
    }

    #[inline]
    pub fn common_neighbors_in(&self, a: usize, b: usize, mask: &[u64]) -> u32 {
        if self.words == 1 {
            return (self.rows[a] & self.rows[b] & mask[0]).count_ones();
        }
        let (ra, rb) = (self.row(a), self.row(b));
        let mut c = 0;
        for k in 0..self.words {
            c += (ra[k] & rb[k] & mask[k]).count_ones();
        }
        c
    }

    pub fn edges(&self) -> impl Iterator<Item = Dyad> + '_ {
        Dyad::all(self.n).filter(move |d| self.has_edge(*d))
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().map(|d| (d.i(), d.j())).collect()
    }

    /// Number of dyads on which `self` and `other` differ.
    pub fn hamming(&self, other: &Graph) -> usize {
        assert_eq!(self.n, other.n);
        let total: u32 = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum();
        total as usize / 2
    }

    /// Number of connected components, isolated nodes included.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for v in 0..self.n {
                    if !seen[v] && self.adjacent(u, v) {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }
}

/// Which of the two binary node attributes to address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attr {
    B1,
    B2,
}

/// Two dichotomous node attributes, with cached membership bitsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeAttributeTable {
    b1: Vec<u8>,
    b2: Vec<u8>,
    // masks[attr][value] is the bitset of nodes holding `value` on `attr`
    masks: [[Vec<u64>; 2]; 2],
}

impl NodeAttributeTable {
    pub fn new(b1: Vec<u8>, b2: Vec<u8>) -> Result<Self, GraphError> {
        if b1.len() != b2.len() {
            return Err(GraphError::Dimension {
                expected: b1.len(),
                found: b2.len(),
            });
        }
        if let Some((node, &v)) = b1.iter().chain(&b2).enumerate().find(|(_, &v)| v > 1) {
            return Err(GraphError::InvalidAttribute {
                node: node % b1.len().max(1),
                value: v,
            });
        }
        let n = b1.len();
        let words = words_for(n);
        let build = |vals: &[u8], want: u8| {
            let mut m = vec![0u64; words];
            for (k, &v) in vals.iter().enumerate() {
                if v == want {
                    m[k / WORD] |= 1 << (k % WORD);
                }
            }
            m
        };
        let masks = [[build(&b1, 0), build(&b1, 1)], [build(&b2, 0), build(&b2, 1)]];
        Ok(NodeAttributeTable { b1, b2, masks })
    }

    /// The orthogonal two-attribute design: quarters of the node set take
    /// (0,0), (0,1), (1,0), (1,1) in that order.
    pub fn faction_design(n: usize) -> Result<Self, GraphError> {
        if n == 0 || !n.is_multiple_of(4) {
            return Err(GraphError::InvalidDesign(n));
        }
        let quarter = n / 4;
        let cell = |k: usize| k / quarter;
        let b1 = (0..n).map(|k| (cell(k) / 2) as u8).collect();
        let b2 = (0..n).map(|k| (cell(k) % 2) as u8).collect();
        NodeAttributeTable::new(b1, b2)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.b1.len()
    }

    #[inline]
    pub fn value(&self, attr: Attr, node: usize) -> u8 {
        match attr {
            Attr::B1 => self.b1[node],
            Attr::B2 => self.b2[node],
        }
    }

    pub fn values(&self, attr: Attr) -> &[u8] {
        match attr {
            Attr::B1 => &self.b1,
            Attr::B2 => &self.b2,
        }
    }

    #[inline]
    pub fn matched(&self, attr: Attr, a: usize, b: usize) -> bool {
        self.value(attr, a) == self.value(attr, b)
    }

    /// Nodes holding `value` on `attr`, as a bitset compatible with [`Graph::row`].
    #[inline]
    pub fn mask(&self, attr: Attr, value: u8) -> &[u64] {
        let a = match attr {
            Attr::B1 => 0,
            Attr::B2 => 1,
        };
        &self.masks[a][value as usize]
    }

    /// Graph with an edge between every pair of nodes matched on `attr`.
    pub fn aligned_graph(&self, attr: Attr) -> Graph {
        let n = self.n();
        let mut g = Graph::empty(n);
        for d in Dyad::all(n) {
            if self.matched(attr, d.i(), d.j()) {
                g.toggle_unchecked(d);
            }
        }
        g
    }
}
