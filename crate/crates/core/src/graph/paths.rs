use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use super::{DistanceMatrix, Topology, WeightedGraph, UNREACHABLE_HOPS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex id
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted adjacency in CSR form. Weights may be negative and parallel
/// edges are allowed.
#[derive(Debug, Clone)]
pub struct SignedGraph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl SignedGraph {
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        for &(u, v, _) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidVertex { vertex: u.max(v), n });
            }
        }
        let mut offsets = vec![0usize; n + 1];
        for &(u, v, _) in edges {
            offsets[u + 1] += 1;
            offsets[v + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for &(u, v, w) in edges {
            targets[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
            targets[fill[v]] = u;
            weights[fill[v]] = w;
            fill[v] += 1;
        }
        Ok(SignedGraph { n, offsets, targets, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn arcs(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.targets[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    /// Minimum walk weight from `source` to every vertex using at most
    /// `max_hops` edges; `INFINITY` where no such walk exists.
    ///
    /// Runs synchronous relaxation rounds, so walk lengths are bounded
    /// exactly even when weights are negative. Only vertices whose value
    /// changed in the previous round are expanded.
    pub fn hop_bounded_distances(&self, source: usize, max_hops: usize) -> Result<Vec<f64>> {
        self.hop_bounded_until(source, max_hops, usize::MAX)
    }

    /// Same as [`Self::hop_bounded_distances`], but returns as soon as
    /// `settle_count` vertices hold a value `<= 0`. Values only decrease, so
    /// entries already `<= 0` stay `<= 0` in the full answer.
    pub(crate) fn hop_bounded_until(
        &self,
        source: usize,
        max_hops: usize,
        settle_count: usize,
    ) -> Result<Vec<f64>> {
        if source >= self.n {
            return Err(Error::InvalidVertex { vertex: source, n: self.n });
        }
        let mut cur = vec![f64::INFINITY; self.n];
        cur[source] = 0.0;
        let mut settled = 1;
        let mut next = cur.clone();
        let mut frontier = vec![source];
        let mut in_next = vec![false; self.n];
        let mut next_frontier = Vec::new();
        for _ in 0..max_hops {
            if frontier.is_empty() || settled >= settle_count {
                break;
            }
            for &x in &frontier {
                let base = cur[x];
                for (y, w) in self.arcs(x) {
                    let cand = base + w;
                    if cand < next[y] {
                        next[y] = cand;
                        if !in_next[y] {
                            in_next[y] = true;
                            next_frontier.push(y);
                        }
                    }
                }
            }
            for &y in &next_frontier {
                in_next[y] = false;
                if cur[y] > 0.0 && next[y] <= 0.0 {
                    settled += 1;
                }
                cur[y] = next[y];
            }
            std::mem::swap(&mut frontier, &mut next_frontier);
            next_frontier.clear();
        }
        Ok(cur)
    }
}

/// Minimum walk weight from `u` to `v` over at most `max_hops` edges.
pub fn hop_bounded_shortest_path(
    n: usize,
    edges: &[(usize, usize, f64)],
    u: usize,
    v: usize,
    max_hops: usize,
) -> Result<f64> {
    if v >= n {
        return Err(Error::InvalidVertex { vertex: v, n });
    }
    let g = SignedGraph::new(n, edges)?;
    Ok(g.hop_bounded_distances(u, max_hops)?[v])
}

/// Single-source shortest paths for nonnegative weights.
pub fn dijkstra(g: &WeightedGraph, source: usize) -> Result<Vec<f64>> {
    let arcs: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
    dijkstra_signed(&SignedGraph::new(g.n(), &arcs)?, source)
}

/// Dijkstra over a `SignedGraph` whose weights are known to be nonnegative.
pub(crate) fn dijkstra_signed(g: &SignedGraph, source: usize) -> Result<Vec<f64>> {
    if source >= g.n {
        return Err(Error::InvalidVertex { vertex: source, n: g.n });
    }
    let mut dist = vec![f64::INFINITY; g.n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, vertex: source });
    while let Some(HeapEntry { dist: d, vertex: x }) = heap.pop() {
        if d > dist[x] {
            continue;
        }
        for (y, w) in g.arcs(x) {
            let cand = d + w;
            if cand < dist[y] {
                dist[y] = cand;
                heap.push(HeapEntry { dist: cand, vertex: y });
            }
        }
    }
    Ok(dist)
}

/// Exact all-pairs distances: Dijkstra from every source.
pub fn exact_apsp(g: &WeightedGraph) -> DistanceMatrix {
    let arcs: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
    let sg = SignedGraph::new(g.n(), &arcs).expect("validated graph");
    let rows: Vec<Vec<f64>> = (0..g.n())
        .into_par_iter()
        .map(|s| dijkstra_signed(&sg, s).expect("source in range"))
        .collect();
    let mut m = DistanceMatrix::from_rows(rows).expect("square");
    // Dijkstra from u and from v may round differently; keep the lower triangle.
    for u in 0..g.n() {
        for v in 0..u {
            let x = m.get(u, v);
            m.set(v, u, x);
        }
    }
    m
}

/// BFS hop counts from `source`; [`UNREACHABLE_HOPS`] marks unreachable vertices.
pub fn hop_distances(t: &Topology, source: usize) -> Result<Vec<usize>> {
    t.check_vertex(source)?;
    let mut dist = vec![UNREACHABLE_HOPS; t.n()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(x) = queue.pop_front() {
        for &y in t.neighbors(x) {
            if dist[y] == UNREACHABLE_HOPS {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    Ok(dist)
}

/// Vertices within hop distance `floor(radius)` of `center`, sorted.
pub fn ball(t: &Topology, center: usize, radius: f64) -> Result<Vec<usize>> {
    t.check_vertex(center)?;
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("ball radius must be >= 0, got {radius}")));
    }
    let alive = vec![true; t.n()];
    let (mut members, _) = restricted_ball(t, &alive, center, hop_radius(radius), usize::MAX);
    members.sort_unstable();
    Ok(members)
}

/// Integral hop radius equivalent to a real radius.
pub(crate) fn hop_radius(radius: f64) -> usize {
    if radius >= usize::MAX as f64 {
        usize::MAX
    } else {
        radius.floor() as usize
    }
}

/// Reusable visit marks for repeated BFS over one topology.
pub(crate) struct BfsScratch {
    stamp: Vec<u32>,
    epoch: u32,
    order: Vec<usize>,
    depth: Vec<usize>,
}

impl BfsScratch {
    pub(crate) fn new(n: usize) -> Self {
        BfsScratch { stamp: vec![0; n], epoch: 0, order: Vec::new(), depth: Vec::new() }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }
}

/// BFS ball in the subgraph induced by `alive`, in BFS order. Stops early
/// once more than `stop_after` vertices were found; the flag reports whether
/// that happened.
pub(crate) fn restricted_ball(
    t: &Topology,
    alive: &[bool],
    center: usize,
    radius: usize,
    stop_after: usize,
) -> (Vec<usize>, bool) {
    let mut scratch = BfsScratch::new(t.n());
    let overflow = restricted_ball_into(t, alive, center, radius, stop_after, &mut scratch);
    (std::mem::take(&mut scratch.order), overflow)
}

/// Same as [`restricted_ball`], leaving the members in `scratch.order`.
pub(crate) fn restricted_ball_into(
    t: &Topology,
    alive: &[bool],
    center: usize,
    radius: usize,
    stop_after: usize,
    scratch: &mut BfsScratch,
) -> bool {
    scratch.next_epoch();
    let epoch = scratch.epoch;
    scratch.order.clear();
    scratch.depth.clear();
    scratch.order.push(center);
    scratch.depth.push(0);
    scratch.stamp[center] = epoch;
    let mut head = 0;
    while head < scratch.order.len() {
        if scratch.order.len() > stop_after {
            return true;
        }
        let x = scratch.order[head];
        let dx = scratch.depth[head];
        head += 1;
        if dx >= radius {
            continue;
        }
        for &y in t.neighbors(x) {
            if alive[y] && scratch.stamp[y] != epoch {
                scratch.stamp[y] = epoch;
                scratch.order.push(y);
                scratch.depth.push(dx + 1);
            }
        }
    }
    scratch.order.len() > stop_after
}

impl BfsScratch {
    pub(crate) fn members(&self) -> &[usize] {
        &self.order
    }
}

/// Component label per vertex, labels assigned in order of smallest member.
pub fn connected_components(t: &Topology) -> Vec<usize> {
    let mut label = vec![usize::MAX; t.n()];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..t.n() {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        stack.push(s);
        while let Some(x) = stack.pop() {
            for &y in t.neighbors(x) {
                if label[y] == usize::MAX {
                    label[y] = next;
                    stack.push(y);
                }
            }
        }
        next += 1;
    }
    label
}
