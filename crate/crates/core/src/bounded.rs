//! Mechanism for weights bounded by a known `A`.
//!
//! Each outer iteration peels the public topology into balls of small hop
//! radius, recursively estimates distances inside every ball, and joins the
//! pieces in a multigraph with three edge colours:
//!
//! * red: every public edge with its weight plus Laplace noise,
//! * blue: every pair of a fresh random hitting set, exact distance plus noise,
//! * green: every pair inside one ball, weighted by the recursive estimate.
//!
//! Distances are shortest walks that respect a per-colour edge budget. The
//! result is the entrywise median over the outer iterations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{
    audit_bounded_recursive, audit_unbounded, calibrate_bounded, child_budget, rescale_delta_for_bounded,
    BoundedAccounting, BoundedConfig, BoundedParams, BoundedReleaseAccounting, Cost, Mode, PrivacyBudget,
};
use crate::error::{Error, Result};
use crate::graph::{
    connected_components, dijkstra_nonnegative, hop_radius, restricted_ball_into, BfsScratch, DistanceMatrix,
    SignedGraph, Topology, WeightedGraph,
};
use crate::randomness::RandomStream;
use crate::unbounded::{reconstruct_all, release_unbounded, SeedProvenance, UnboundedOptions};

pub const PEEL_TRACE_FORMAT_VERSION: u32 = 1;
pub const BOUNDED_OUTPUT_FORMAT_VERSION: u32 = 1;

const LABEL_PEEL: u64 = 11;
const LABEL_HITTING_SET: u64 = 12;
const LABEL_BLUE: u64 = 13;
const LABEL_RED: u64 = 14;
const LABEL_BASE: u64 = 15;
const LABEL_BALLS: u64 = 1 << 32;

// ---------------------------------------------------------------------------
// Peeling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelStep {
    pub center: usize,
    pub radius: f64,
    /// Sorted members of the ball.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeelTrace {
    pub format_version: u32,
    pub n: usize,
    pub radius_mean: f64,
    pub ball_size_cap: usize,
    pub probe_radius: f64,
    pub steps: Vec<PeelStep>,
    /// Sorted vertices never peeled.
    pub survivors: Vec<usize>,
}

/// Peeling with the probe radius `100 · R · ln n`.
pub fn peel(t: &Topology, radius_mean: f64, ball_size_cap: usize, stream: &RandomStream) -> Result<PeelTrace> {
    let probe = 100.0 * radius_mean * (t.n().max(1) as f64).ln();
    peel_with_probe(t, radius_mean, ball_size_cap, probe, stream)
}

/// Repeatedly peels `B(v, r)` with `r ~ Expo(radius_mean)` around the
/// smallest-id remaining vertex `v` whose probe ball holds at most
/// `ball_size_cap` remaining vertices.
pub fn peel_with_probe(
    t: &Topology,
    radius_mean: f64,
    ball_size_cap: usize,
    probe_radius: f64,
    stream: &RandomStream,
) -> Result<PeelTrace> {
    if !(radius_mean > 0.0) {
        return Err(Error::InvalidParameter(format!("peel radius mean must be > 0, got {radius_mean}")));
    }
    if ball_size_cap == 0 {
        return Err(Error::InvalidParameter("ball size cap must be >= 1".into()));
    }
    if !(probe_radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("probe radius must be >= 0, got {probe_radius}")));
    }
    let n = t.n();
    let probe = hop_radius(probe_radius);
    let mut rng = stream.clone();
    let mut alive = vec![true; n];
    let mut scratch = BfsScratch::new(n);
    let mut steps = Vec::new();
    loop {
        let center = (0..n).find(|&v| alive[v] && !restricted_ball_into(t, &alive, v, probe, ball_size_cap, &mut scratch));
        let Some(center) = center else { break };
        let radius = rng.expo(radius_mean)?;
        restricted_ball_into(t, &alive, center, hop_radius(radius), usize::MAX, &mut scratch);
        let mut members = scratch.members().to_vec();
        members.sort_unstable();
        for &m in &members {
            alive[m] = false;
        }
        steps.push(PeelStep { center, radius, members });
    }
    let survivors = (0..n).filter(|&v| alive[v]).collect();
    Ok(PeelTrace {
        format_version: PEEL_TRACE_FORMAT_VERSION,
        n,
        radius_mean,
        ball_size_cap,
        probe_radius,
        steps,
        survivors,
    })
}

impl PeelTrace {
    /// Re-checks the partition, that every ball is the ball recorded in the
    /// graph left by earlier steps, and the termination certificate.
    pub fn verify(&self, t: &Topology) -> Result<()> {
        let n = t.n();
        if self.n != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.n });
        }
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        let mut alive = vec![true; n];
        let mut scratch = BfsScratch::new(n);
        let probe = hop_radius(self.probe_radius);
        for (i, step) in self.steps.iter().enumerate() {
            if step.center >= n || !alive[step.center] {
                return fail(format!("step {i}: center {} not available", step.center));
            }
            if restricted_ball_into(t, &alive, step.center, probe, self.ball_size_cap, &mut scratch) {
                return fail(format!("step {i}: center {} has an oversized probe ball", step.center));
            }
            if let Some(smaller) =
                (0..step.center).find(|&v| alive[v] && !restricted_ball_into(t, &alive, v, probe, self.ball_size_cap, &mut scratch))
            {
                return fail(format!("step {i}: vertex {smaller} qualified before {}", step.center));
            }
            restricted_ball_into(t, &alive, step.center, hop_radius(step.radius), usize::MAX, &mut scratch);
            let mut expected = scratch.members().to_vec();
            expected.sort_unstable();
            if expected != step.members {
                return fail(format!("step {i}: members differ from the ball"));
            }
            for &m in &step.members {
                alive[m] = false;
            }
        }
        let survivors: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        if survivors != self.survivors {
            return fail("survivors do not complete the partition".into());
        }
        for &v in &survivors {
            if !restricted_ball_into(t, &alive, v, probe, self.ball_size_cap, &mut scratch) {
                return fail(format!("survivor {v} still qualifies for peeling"));
            }
        }
        Ok(())
    }

    /// Colour per vertex: 1-based step index, 0 for survivors.
    pub fn colors(&self) -> Vec<usize> {
        let mut color = vec![0usize; self.n];
        for (i, step) in self.steps.iter().enumerate() {
            for &m in &step.members {
                color[m] = i + 1;
            }
        }
        color
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorChangeStats {
    /// Hop length Q of the path.
    pub q: usize,
    /// X: consecutive path pairs in different colour classes.
    pub color_changes: usize,
    /// Y: path vertices that were peeled.
    pub colored_count: usize,
}

pub fn color_change_stats(trace: &PeelTrace, t: &Topology, path: &[usize]) -> Result<ColorChangeStats> {
    if path.is_empty() {
        return Err(Error::InvalidParameter("empty path".into()));
    }
    for &v in path {
        t.check_vertex(v)?;
    }
    for w in path.windows(2) {
        if !t.has_edge(w[0], w[1]) {
            return Err(Error::InvalidParameter(format!("({}, {}) is not an edge", w[0], w[1])));
        }
    }
    let color = trace.colors();
    Ok(ColorChangeStats {
        q: path.len() - 1,
        color_changes: path.windows(2).filter(|w| color[w[0]] != color[w[1]]).count(),
        colored_count: path.iter().filter(|&&v| color[v] != 0).count(),
    })
}

// ---------------------------------------------------------------------------
// Colour-budgeted shortest walks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredMultigraph {
    pub n: usize,
    pub red: Vec<(usize, usize, f64)>,
    pub blue: Vec<(usize, usize, f64)>,
    pub green: Vec<(usize, usize, f64)>,
    pub max_red: usize,
    pub max_blue: usize,
    pub max_green: usize,
}

impl ColoredMultigraph {
    pub fn new(n: usize, max_red: usize, max_blue: usize, max_green: usize) -> Self {
        ColoredMultigraph { n, red: Vec::new(), blue: Vec::new(), green: Vec::new(), max_red, max_blue, max_green }
    }

    pub fn add(&mut self, color: Color, u: usize, v: usize, w: f64) -> Result<()> {
        if u >= self.n || v >= self.n {
            return Err(Error::InvalidVertex { vertex: u.max(v), n: self.n });
        }
        if w.is_nan() {
            return Err(Error::InvalidParameter("edge weight is NaN".into()));
        }
        match color {
            Color::Red => self.red.push((u, v, w)),
            Color::Blue => self.blue.push((u, v, w)),
            Color::Green => self.green.push((u, v, w)),
        }
        Ok(())
    }
}

/// Per-colour CSR adjacency, shared by all sources.
struct ColorAdjacency {
    red: SignedGraph,
    blue: SignedGraph,
    green: SignedGraph,
    max_red: usize,
    /// Blue and green levels actually needed.
    blue_levels: usize,
    green_levels: usize,
}

impl ColorAdjacency {
    fn new(mg: &ColoredMultigraph) -> Result<Self> {
        Ok(ColorAdjacency {
            red: SignedGraph::new(mg.n, &mg.red)?,
            blue: SignedGraph::new(mg.n, &mg.blue)?,
            green: SignedGraph::new(mg.n, &mg.green)?,
            max_red: if mg.red.is_empty() { 0 } else { mg.max_red },
            blue_levels: if mg.blue.is_empty() { 1 } else { mg.max_blue + 1 },
            green_levels: if mg.green.is_empty() { 1 } else { mg.max_green + 1 },
        })
    }

    /// Minimum budget-respecting walk weight from `source` to every vertex.
    ///
    /// State `(g, b, v)` holds the best walk reaching `v` with exactly `g`
    /// green and `b` blue edges and at most `r` red edges after round `r`.
    /// Non-red moves strictly increase `(g, b)`, so one ordered pass over
    /// the levels closes the states under them. Returns early once the
    /// per-vertex minima of `settle_count` vertices are `<= 0`.
    fn distances_from(&self, source: usize, settle_count: usize) -> Vec<f64> {
        let n = self.red.n();
        let levels = self.green_levels * self.blue_levels;
        let idx = |g: usize, b: usize| g * self.blue_levels + b;
        let mut cur = vec![f64::INFINITY; levels * n];
        let mut in_touched = vec![false; levels * n];
        let mut touched: Vec<Vec<usize>> = vec![Vec::new(); levels];
        let mut best = vec![f64::INFINITY; n];
        let mut settled = 0usize;

        let update = |cur: &mut [f64],
                          in_touched: &mut [bool],
                          touched: &mut [Vec<usize>],
                          best: &mut [f64],
                          settled: &mut usize,
                          level: usize,
                          y: usize,
                          value: f64| {
            let slot = level * n + y;
            if value < cur[slot] {
                cur[slot] = value;
                if !in_touched[slot] {
                    in_touched[slot] = true;
                    touched[level].push(y);
                }
                if value < best[y] {
                    if best[y] > 0.0 && value <= 0.0 {
                        *settled += 1;
                    }
                    best[y] = value;
                }
            }
        };

        update(&mut cur, &mut in_touched, &mut touched, &mut best, &mut settled, 0, source, 0.0);
        let mut round = 0usize;
        loop {
            // non-red closure in (g, b) order
            for g in 0..self.green_levels {
                for b in 0..self.blue_levels {
                    let target = idx(g, b);
                    if g > 0 {
                        let from = idx(g - 1, b);
                        for k in 0..touched[from].len() {
                            let x = touched[from][k];
                            let base = cur[from * n + x];
                            for (y, w) in self.green.arcs(x) {
                                update(&mut cur, &mut in_touched, &mut touched, &mut best, &mut settled, target, y, base + w);
                            }
                        }
                    }
                    if b > 0 {
                        let from = idx(g, b - 1);
                        for k in 0..touched[from].len() {
                            let x = touched[from][k];
                            let base = cur[from * n + x];
                            for (y, w) in self.blue.arcs(x) {
                                update(&mut cur, &mut in_touched, &mut touched, &mut best, &mut settled, target, y, base + w);
                            }
                        }
                    }
                }
            }
            if round == self.max_red || settled >= settle_count || touched.iter().all(|l| l.is_empty()) {
                break;
            }
            round += 1;
            // one red edge per round, relaxed from the values at round start
            let mut pending: Vec<(usize, usize, f64)> = Vec::new();
            for (level, list) in touched.iter_mut().enumerate() {
                for &x in list.iter() {
                    in_touched[level * n + x] = false;
                    let base = cur[level * n + x];
                    for (y, w) in self.red.arcs(x) {
                        let cand = base + w;
                        if cand < cur[level * n + y] {
                            pending.push((level, y, cand));
                        }
                    }
                }
                list.clear();
            }
            for (level, y, value) in pending {
                update(&mut cur, &mut in_touched, &mut touched, &mut best, &mut settled, level, y, value);
            }
        }
        best[source] = best[source].min(0.0);
        best
    }
}

/// Minimum weight of a `u`–`v` walk with at most `max_red` red, `max_blue`
/// blue and `max_green` green edges; `0` when `u = v`, `+∞` if none exists.
pub fn constrained_shortest_path(mg: &ColoredMultigraph, u: usize, v: usize) -> Result<f64> {
    if u >= mg.n || v >= mg.n {
        return Err(Error::InvalidVertex { vertex: u.max(v), n: mg.n });
    }
    if u == v {
        return Ok(0.0);
    }
    let adj = ColorAdjacency::new(mg)?;
    Ok(adj.distances_from(u, usize::MAX)[v])
}

/// Budgeted distances for every pair, rows computed independently.
pub fn constrained_all_pairs(mg: &ColoredMultigraph) -> Result<DistanceMatrix> {
    let adj = ColorAdjacency::new(mg)?;
    let rows: Vec<Vec<f64>> = (0..mg.n)
        .into_par_iter()
        .map(|u| {
            let mut row = adj.distances_from(u, usize::MAX);
            row[u] = 0.0;
            row
        })
        .collect();
    DistanceMatrix::from_rows(rows)
}

// ---------------------------------------------------------------------------
// Recursive release
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedStats {
    /// Recursive calls including the top level and base cases.
    pub calls: usize,
    pub base_calls: usize,
    pub max_depth: usize,
    /// Calls whose own audit reported the cost within its budget.
    pub calls_within_budget: usize,
}

impl BoundedStats {
    fn leaf(within: bool, base: bool) -> Self {
        BoundedStats { calls: 1, base_calls: base as usize, max_depth: 0, calls_within_budget: within as usize }
    }

    fn absorb(&mut self, child: &BoundedStats) {
        self.calls += child.calls;
        self.base_calls += child.base_calls;
        self.max_depth = self.max_depth.max(child.max_depth + 1);
        self.calls_within_budget += child.calls_within_budget;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedOutput {
    pub format_version: u32,
    pub n: usize,
    pub mode: Mode,
    pub weight_bound: f64,
    pub edge_count: usize,
    pub config: BoundedConfig,
    pub params: Option<BoundedParams>,
    pub matrix: DistanceMatrix,
    pub accounting: BoundedReleaseAccounting,
    pub stats: BoundedStats,
    pub provenance: SeedProvenance,
    /// Top-level peel traces, one per outer iteration, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub peel_traces: Vec<PeelTrace>,
}

/// Depth limit `10 · log₂ log₂ n + 5`.
pub fn recursion_depth_limit(n: usize) -> usize {
    let ll = if n >= 4 { (n as f64).log2().log2() } else { 0.0 };
    (10.0 * ll).floor() as usize + 5
}

struct Ctx<'a> {
    a: f64,
    mode: Mode,
    config: &'a BoundedConfig,
    depth_limit: usize,
    keep_traces: bool,
}

struct CallResult {
    matrix: DistanceMatrix,
    accounting: BoundedAccounting,
    params: Option<BoundedParams>,
    stats: BoundedStats,
    traces: Vec<PeelTrace>,
}

/// Runs the bounded-weight mechanism on `g`, whose weight bound must be set.
/// The requested δ is rescaled to `δ / 3n²` internally so the output is
/// (ε, δ)-DP under ℓ1 adjacency.
pub fn bounded_apsp(
    g: &WeightedGraph,
    budget: &PrivacyBudget,
    mode: Mode,
    stream: &RandomStream,
    config: &BoundedConfig,
    keep_traces: bool,
) -> Result<BoundedOutput> {
    budget.check_mode(mode)?;
    let a = g
        .weight_bound()
        .ok_or_else(|| Error::InvalidParameter("the bounded mechanism needs a weight bound".into()))?;
    let n = g.n();
    if n == 0 {
        return Err(Error::InvalidParameter("graph has no vertices".into()));
    }
    let inner = PrivacyBudget {
        epsilon: budget.epsilon,
        delta: match mode {
            Mode::Pure => 0.0,
            Mode::Approx => rescale_delta_for_bounded(budget.delta, n),
        },
    };
    let ctx = Ctx { a, mode, config, depth_limit: recursion_depth_limit(n), keep_traces };
    let res = recurse(g, &inner, stream, 0, &ctx)?;
    let mut accounting = BoundedReleaseAccounting::new(*budget, mode, n, res.accounting);
    accounting.calls_audited = res.stats.calls;
    accounting.calls_within_budget = res.stats.calls_within_budget;
    accounting.within_budget &= accounting.calls_within_budget == accounting.calls_audited;
    Ok(BoundedOutput {
        format_version: BOUNDED_OUTPUT_FORMAT_VERSION,
        n,
        mode,
        weight_bound: a,
        edge_count: g.edges().len(),
        config: *config,
        params: res.params,
        matrix: res.matrix,
        accounting,
        stats: res.stats,
        provenance: SeedProvenance { seed: stream.seed(), stream_id: stream.stream_id() },
        peel_traces: res.traces,
    })
}

fn clamp_matrix(m: &mut DistanceMatrix, t: &Topology, upper: f64) {
    let comp = connected_components(t);
    let n = m.n();
    for u in 0..n {
        for v in 0..n {
            let x = m.get(u, v);
            let y = if u == v {
                0.0
            } else if comp[u] != comp[v] {
                f64::INFINITY
            } else {
                x.clamp(0.0, upper)
            };
            m.set(u, v, y);
        }
    }
}

fn recurse(h: &WeightedGraph, budget: &PrivacyBudget, stream: &RandomStream, depth: usize, ctx: &Ctx) -> Result<CallResult> {
    let n = h.n();
    if depth > ctx.depth_limit {
        return Err(Error::RecursionDepth { depth, limit: ctx.depth_limit, n });
    }
    if n == 1 {
        return Ok(CallResult {
            matrix: DistanceMatrix::new(1),
            accounting: BoundedAccounting {
                mode: ctx.mode,
                budget: *budget,
                n,
                kind: "trivial".into(),
                repetitions: 0,
                per_iteration: None,
                base: None,
                base_params: None,
                child_budget: None,
                total: Cost::ZERO,
                within_budget: true,
            },
            params: None,
            stats: BoundedStats::leaf(true, false),
            traces: Vec::new(),
        });
    }
    let t = h.topology();
    let upper = n as f64 * ctx.a;
    let params = calibrate_bounded(n, ctx.a, budget, ctx.mode, ctx.config)?;
    if !params.recursion_possible {
        return base_case(h, &t, budget, stream, upper, params, ctx);
    }

    let k = params.repetitions;
    let child = child_budget(budget, k, ctx.mode);
    let settle = component_sizes(&t);
    let iterations: Vec<(DistanceMatrix, BoundedStats, PeelTrace)> = (0..k)
        .into_par_iter()
        .map(|iter| {
            let s_iter = stream.split(iter as u64);
            let trace = peel_with_probe(&t, params.peel_radius_mean, params.ball_size_cap, params.probe_radius, &s_iter.split(LABEL_PEEL))?;
            let mut mg = ColoredMultigraph::new(n, params.max_red, params.max_blue, params.max_green);
            let mut stats = BoundedStats { calls: 0, base_calls: 0, max_depth: 0, calls_within_budget: 0 };

            // green: per-ball median of K fresh recursive estimates
            let jobs: Vec<(usize, usize)> = (0..trace.steps.len()).flat_map(|b| (0..k).map(move |l| (b, l))).collect();
            let results: Vec<CallResult> = jobs
                .par_iter()
                .map(|&(b, l)| {
                    let sub = h.induced(&trace.steps[b].members);
                    let s = s_iter.split(LABEL_BALLS + b as u64).split(l as u64);
                    recurse(&sub, &child, &s, depth + 1, ctx)
                })
                .collect::<Result<_>>()?;
            for (b, chunk) in results.chunks(k.max(1)).enumerate() {
                let mats: Vec<DistanceMatrix> = chunk.iter().map(|r| r.matrix.clone()).collect();
                for r in chunk {
                    stats.absorb(&r.stats);
                }
                let median = DistanceMatrix::entrywise_median(&mats)?;
                let members = &trace.steps[b].members;
                for i in 0..members.len() {
                    for j in i + 1..members.len() {
                        let w = median.get(i, j);
                        if w.is_finite() {
                            mg.add(Color::Green, members[i], members[j], w)?;
                        }
                    }
                }
            }

            // blue: noisy exact distances on a fresh hitting set
            let hitting = s_iter.split(LABEL_HITTING_SET).sample_without_replacement(n, params.hitting_set_size)?;
            let arcs: Vec<(usize, usize, f64)> = h.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
            let sg = SignedGraph::new(n, &arcs)?;
            let exact: Vec<Vec<f64>> = hitting.par_iter().map(|&s| dijkstra_nonnegative(&sg, s)).collect::<Result<_>>()?;
            let mut blue_noise = s_iter.split(LABEL_BLUE);
            for i in 0..hitting.len() {
                for j in i + 1..hitting.len() {
                    let noise = blue_noise.laplace(params.blue_scale)?;
                    let d = exact[i][hitting[j]];
                    if d.is_finite() {
                        mg.add(Color::Blue, hitting[i], hitting[j], d + noise)?;
                    }
                }
            }

            // red: noisy public edges
            let mut red_noise = s_iter.split(LABEL_RED);
            for e in h.edges() {
                mg.add(Color::Red, e.u, e.v, e.w + red_noise.laplace(params.red_scale)?)?;
            }

            let adj = ColorAdjacency::new(&mg)?;
            let comp = connected_components(&t);
            let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|u| adj.distances_from(u, settle[comp[u]])).collect();
            let mut m = DistanceMatrix::from_rows(rows)?;
            // keep the upper triangle so the estimate is exactly symmetric
            for u in 0..n {
                for v in u + 1..n {
                    let x = m.get(u, v);
                    m.set(v, u, x);
                }
            }
            clamp_matrix(&mut m, &t, upper);
            Ok((m, stats, trace))
        })
        .collect::<Result<_>>()?;

    let audit = audit_bounded_recursive(&params, h.edges().len(), budget, ctx.mode);
    let mut stats = BoundedStats::leaf(audit.within_budget && !ctx.config.zero_noise, false);
    let mut mats = Vec::with_capacity(k);
    let mut traces = Vec::new();
    for (m, s, trace) in iterations {
        stats.calls += s.calls;
        stats.base_calls += s.base_calls;
        stats.calls_within_budget += s.calls_within_budget;
        if s.calls > 0 {
            stats.max_depth = stats.max_depth.max(s.max_depth);
        }
        mats.push(m);
        if ctx.keep_traces && depth == 0 {
            traces.push(trace);
        }
    }
    let matrix = DistanceMatrix::entrywise_median(&mats)?;
    let mut accounting = audit;
    accounting.within_budget &= !ctx.config.zero_noise;
    Ok(CallResult { matrix, accounting, params: Some(params), stats, traces })
}

fn component_sizes(t: &Topology) -> Vec<usize> {
    let comp = connected_components(t);
    let mut size = vec![0usize; t.n()];
    for &c in &comp {
        size[c] += 1;
    }
    size
}

fn base_case(
    h: &WeightedGraph,
    t: &Topology,
    budget: &PrivacyBudget,
    stream: &RandomStream,
    upper: f64,
    params: BoundedParams,
    ctx: &Ctx,
) -> Result<CallResult> {
    let n = h.n();
    let mut options = if ctx.config.zero_noise {
        UnboundedOptions::zero_noise(n, budget, ctx.mode)?
    } else {
        UnboundedOptions::default()
    };
    options.c_l = ctx.config.base_c_l;
    options.c_t = ctx.config.base_c_t;
    let release = release_unbounded(h, budget, ctx.mode, &stream.split(LABEL_BASE), &options)?;
    let mut matrix = reconstruct_all(&release, t)?;
    clamp_matrix(&mut matrix, t, upper);
    let audit = audit_unbounded(&release.params, h.edges().len(), budget, ctx.mode);
    let within = audit.within_budget;
    Ok(CallResult {
        matrix,
        accounting: BoundedAccounting {
            mode: ctx.mode,
            budget: *budget,
            n,
            kind: "base".into(),
            repetitions: 0,
            per_iteration: None,
            total: audit.total,
            base: Some(audit),
            base_params: Some(release.params),
            child_budget: None,
            within_budget: within,
        },
        params: Some(params),
        stats: BoundedStats::leaf(within, true),
        traces: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{exact_apsp, Edge};

    fn path_topology(n: usize) -> Topology {
        Topology::new(n, (0..n - 1).map(|i| (i, i + 1)).collect()).unwrap()
    }

    #[test]
    fn complete_graph_never_peels() {
        let mut edges = Vec::new();
        for u in 0..100 {
            for v in u + 1..100 {
                edges.push((u, v));
            }
        }
        let t = Topology::new(100, edges).unwrap();
        let trace = peel(&t, 2.0, 10, &RandomStream::new(1, 0)).unwrap();
        assert!(trace.steps.is_empty());
        assert_eq!(trace.survivors.len(), 100);
        trace.verify(&t).unwrap();
    }

    #[test]
    fn isolated_vertices_peel_one_by_one() {
        let t = Topology::new(7, vec![]).unwrap();
        let trace = peel(&t, 3.0, 1, &RandomStream::new(1, 0)).unwrap();
        assert_eq!(trace.steps.len(), 7);
        for (i, s) in trace.steps.iter().enumerate() {
            assert_eq!(s.members, vec![i]);
        }
        assert!(trace.survivors.is_empty());
        trace.verify(&t).unwrap();
    }

    #[test]
    fn path_peels_into_contiguous_segments() {
        let t = path_topology(20);
        let trace = peel(&t, 2.0, 20, &RandomStream::new(7, 0)).unwrap();
        trace.verify(&t).unwrap();
        assert!(trace.survivors.is_empty());
        let mut seen = vec![false; 20];
        for s in &trace.steps {
            assert!(s.members.windows(2).all(|w| w[1] == w[0] + 1));
            for &m in &s.members {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn verify_catches_tampering() {
        let t = path_topology(20);
        let mut trace = peel(&t, 2.0, 20, &RandomStream::new(7, 0)).unwrap();
        trace.steps[0].members.pop();
        assert!(trace.verify(&t).is_err());
    }

    #[test]
    fn color_changes_count_directly() {
        let t = path_topology(4);
        let trace = PeelTrace {
            format_version: PEEL_TRACE_FORMAT_VERSION,
            n: 4,
            radius_mean: 1.0,
            ball_size_cap: 4,
            probe_radius: 0.0,
            steps: vec![
                PeelStep { center: 0, radius: 0.0, members: vec![0, 2] },
                PeelStep { center: 1, radius: 0.0, members: vec![1, 3] },
            ],
            survivors: vec![],
        };
        let s = color_change_stats(&trace, &t, &[0, 1, 2, 3]).unwrap();
        assert_eq!(s, ColorChangeStats { q: 3, color_changes: 3, colored_count: 4 });

        let one = peel(&t, 1e9, 4, &RandomStream::new(1, 0)).unwrap();
        let s = color_change_stats(&one, &t, &[0, 1, 2, 3]).unwrap();
        assert_eq!(s.color_changes, 0);
        assert!(color_change_stats(&one, &t, &[0, 2]).is_err());
    }

    #[test]
    fn budgets_are_respected() {
        let mut mg = ColoredMultigraph::new(3, 0, 1, 0);
        mg.add(Color::Blue, 0, 1, 5.0).unwrap();
        mg.add(Color::Blue, 1, 2, 1.0).unwrap();
        assert_eq!(constrained_shortest_path(&mg, 0, 1).unwrap(), 5.0);
        // a second blue hop is never allowed
        assert_eq!(constrained_shortest_path(&mg, 0, 2).unwrap(), f64::INFINITY);
        assert_eq!(constrained_shortest_path(&mg, 2, 2).unwrap(), 0.0);
        assert!(constrained_shortest_path(&mg, 0, 3).is_err());

        let mut mg = ColoredMultigraph::new(3, 2, 1, 1);
        mg.add(Color::Red, 0, 1, -1.0).unwrap();
        mg.add(Color::Green, 1, 2, 4.0).unwrap();
        // red bounce twice, then green
        assert_eq!(constrained_shortest_path(&mg, 0, 2).unwrap(), 3.0);
        assert_eq!(constrained_shortest_path(&mg, 0, 1).unwrap(), -1.0);
    }

    #[test]
    fn single_vertex_costs_nothing() {
        let g = WeightedGraph::new(1, vec![], Some(1.0)).unwrap();
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let out = bounded_apsp(&g, &b, Mode::Approx, &RandomStream::new(1, 0), &BoundedConfig::default(), false).unwrap();
        assert_eq!(out.matrix.rows(), vec![vec![0.0]]);
        assert_eq!(out.accounting.l1_cost, Cost::ZERO);
        assert!(out.accounting.within_budget);
    }

    #[test]
    fn requires_weight_bound() {
        let g = WeightedGraph::new(2, vec![Edge::new(0, 1, 1.0)], None).unwrap();
        let b = PrivacyBudget::pure(1.0).unwrap();
        assert!(bounded_apsp(&g, &b, Mode::Pure, &RandomStream::new(1, 0), &BoundedConfig::default(), false).is_err());
    }

    #[test]
    fn zero_noise_with_forced_recursion_is_exact() {
        // a long path peels under a small probe, so the recursion is exercised
        let n = 40;
        let edges = (0..n - 1).map(|i| Edge::new(i, i + 1, 0.5 + (i % 3) as f64 * 0.25)).collect();
        let g = WeightedGraph::new(n, edges, Some(1.0)).unwrap();
        let b = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let cfg = BoundedConfig {
            zero_noise: true,
            probe_multiplier: 0.5,
            hitting_multiplier: 1.0,
            repetitions: Some(1),
            ..Default::default()
        };
        let out = bounded_apsp(&g, &b, Mode::Approx, &RandomStream::new(3, 0), &cfg, true).unwrap();
        assert!(out.stats.calls > 1, "{:?}", out.stats);
        assert!(!out.accounting.within_budget);
        let exact = exact_apsp(&g);
        for u in 0..n {
            for v in 0..n {
                assert!((out.matrix.get(u, v) - exact.get(u, v)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn depth_limit_examples() {
        assert_eq!(recursion_depth_limit(2), 5);
        assert_eq!(recursion_depth_limit(16), 25);
        assert_eq!(recursion_depth_limit(256), 35);
    }
}
