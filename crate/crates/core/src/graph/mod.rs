//! Graph representation: public topology, private edge weights and dense
//! distance matrices.
//!
//! Vertices are the ids `0..n`. Graphs are undirected and simple; the
//! multigraphs assembled by the bounded-weight mechanism live in
//! [`crate::bounded`] and are never represented here.

mod io;
mod paths;

pub use io::{parse_graph, parse_topology, read_graph, read_topology, write_graph};
pub use paths::{
    ball, connected_components, dijkstra, exact_apsp, hop_bounded_shortest_path, hop_distances,
    SignedGraph,
};
pub(crate) use paths::{dijkstra_signed as dijkstra_nonnegative, hop_radius, restricted_ball_into, BfsScratch};

use std::collections::HashSet;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Hop count reported for vertices that cannot be reached.
pub const UNREACHABLE_HOPS: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl Edge {
    pub fn new(u: usize, v: usize, w: f64) -> Self {
        Edge { u, v, w }
    }
}

/// Weighted graph whose topology is public and whose weights are private.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    weight_bound: Option<f64>,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<Edge>, weight_bound: Option<f64>) -> Result<Self> {
        if let Some(a) = weight_bound {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidGraph(format!("weight bound must be positive, got {a}")));
            }
        }
        check_structure(n, edges.iter().map(|e| (e.u, e.v)))?;
        for e in &edges {
            if !(e.w > 0.0 && e.w.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has non-positive or non-finite weight {}",
                    e.u, e.v, e.w
                )));
            }
            if let Some(a) = weight_bound {
                if e.w > a {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({}, {}) weight {} exceeds bound {a}",
                        e.u, e.v, e.w
                    )));
                }
            }
        }
        Ok(WeightedGraph { n, edges, weight_bound })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight_bound(&self) -> Option<f64> {
        self.weight_bound
    }

    /// Returns a copy with the weight bound replaced, re-validating weights.
    pub fn with_weight_bound(self, bound: Option<f64>) -> Result<Self> {
        WeightedGraph::new(self.n, self.edges, bound)
    }

    pub fn topology(&self) -> Topology {
        Topology::from_valid(self.n, self.edges.iter().map(|e| (e.u, e.v)).collect())
    }

    /// Subgraph induced by `vertices`, relabelled to `0..vertices.len()` in the
    /// given order. The weight bound carries over.
    pub fn induced(&self, vertices: &[usize]) -> WeightedGraph {
        let mut local = vec![usize::MAX; self.n];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| local[e.u] != usize::MAX && local[e.v] != usize::MAX)
            .map(|e| Edge::new(local[e.u], local[e.v], e.w))
            .collect();
        WeightedGraph { n: vertices.len(), edges, weight_bound: self.weight_bound }
    }
}

/// Unweighted public topology with a CSR adjacency index.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Topology {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        check_structure(n, edges.iter().copied())?;
        Ok(Topology::from_valid(n, edges))
    }

    fn from_valid(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; n + 1];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, v) in &edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Topology { n, edges, offsets, neighbors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub(crate) fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::InvalidVertex { vertex: v, n: self.n })
        }
    }
}

fn check_structure(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    let mut seen = HashSet::new();
    for (u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::InvalidVertex { vertex: u.max(v), n });
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
        }
    }
    Ok(())
}

/// Dense `n × n` matrix of distances; `f64::INFINITY` marks unreachable pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// All-infinite matrix with a zero diagonal.
    pub fn new(n: usize) -> Self {
        let mut values = vec![f64::INFINITY; n * n];
        for i in 0..n {
            values[i * n + i] = 0.0;
        }
        DistanceMatrix { n, values }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            values.extend(row);
        }
        Ok(DistanceMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.n + v]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.values[u * self.n + v] = value;
    }

    /// Sets both `(u, v)` and `(v, u)`.
    pub fn set_symmetric(&mut self, u: usize, v: usize, value: f64) {
        self.set(u, v, value);
        self.set(v, u, value);
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.values[u * self.n..(u + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| (0..u).all(|v| self.get(u, v).to_bits() == self.get(v, u).to_bits()))
    }

    /// Entrywise median of equally sized matrices. With an even count the
    /// lower median is taken so every entry is one of the inputs.
    pub fn entrywise_median(matrices: &[DistanceMatrix]) -> Result<DistanceMatrix> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidParameter("median of zero matrices".into()))?;
        let n = first.n;
        for m in matrices {
            if m.n != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.n });
            }
        }
        let mut out = DistanceMatrix { n, values: vec![0.0; n * n] };
        let mut scratch = Vec::with_capacity(matrices.len());
        for idx in 0..n * n {
            scratch.clear();
            scratch.extend(matrices.iter().map(|m| m.values[idx]));
            scratch.sort_by(f64::total_cmp);
            out.values[idx] = scratch[(scratch.len() - 1) / 2];
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    n: usize,
    rows: Vec<Vec<Option<f64>>>,
}

impl Serialize for DistanceMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = (0..self.n)
            .map(|u| self.row(u).iter().map(|&x| x.is_finite().then_some(x)).collect())
            .collect();
        MatrixRepr { n: self.n, rows }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DistanceMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(deserializer)?;
        let rows = repr
            .rows
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
            .collect();
        let m = DistanceMatrix::from_rows(rows).map_err(serde::de::Error::custom)?;
        if m.n != repr.n {
            return Err(serde::de::Error::custom("row count does not match n"));
        }
        Ok(m)
    }
}
