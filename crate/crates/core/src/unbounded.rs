//! Mechanism for arbitrary nonnegative weights.
//!
//! The release holds noisy distances among a uniformly random hitting set
//! `S` and a noisy copy of every edge weight. Everything after that is
//! post-processing of the release and the public topology: each pair is
//! estimated as the smaller of a hop-bounded shortest walk on the noisy
//! edges and a detour `u → i ∈ S → j ∈ S → v` through released distances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{audit_unbounded, calibrate_unbounded, Mode, PrivacyBudget, UnboundedAccounting, UnboundedParams};
use crate::error::{Error, Result};
use crate::graph::{connected_components, DistanceMatrix, Edge, SignedGraph, Topology, WeightedGraph};
use crate::randomness::RandomStream;

pub const RELEASE_FORMAT_VERSION: u32 = 1;

const LABEL_HITTING_SET: u64 = 1;
const LABEL_S_NOISE: u64 = 2;
const LABEL_EDGE_NOISE: u64 = 3;

/// Where a release's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub seed: u64,
    pub stream_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnboundedRelease {
    pub format_version: u32,
    pub n: usize,
    pub mode: Mode,
    pub params: UnboundedParams,
    /// Sorted hitting set `S`.
    pub hitting_set: Vec<usize>,
    /// `|S| × |S|` noisy distances, symmetric with a zero diagonal.
    pub s_distances: DistanceMatrix,
    /// Noisy weights in the order of the public edge list; may be negative.
    pub noisy_edges: Vec<Edge>,
    pub provenance: SeedProvenance,
    pub accounting: UnboundedAccounting,
}

/// Knobs for [`release_unbounded`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedOptions {
    pub c_l: f64,
    pub c_t: f64,
    /// Replaces the calibrated parameters; the audit still reflects them.
    pub params_override: Option<UnboundedParams>,
    /// Fixes `S` instead of sampling it. Test and debug use only.
    pub hitting_set_override: Option<Vec<usize>>,
}

impl Default for UnboundedOptions {
    fn default() -> Self {
        UnboundedOptions { c_l: 1.0, c_t: 1.0, params_override: None, hitting_set_override: None }
    }
}

impl UnboundedOptions {
    /// Release with every noise scale set to zero and hop radius `R`. Not
    /// private; the audit reports it as over budget.
    pub fn zero_noise(n: usize, budget: &PrivacyBudget, mode: Mode) -> Result<Self> {
        let mut p = calibrate_unbounded(n, budget, mode, 1.0, 1.0)?;
        p.noise_scale_s = 0.0;
        p.edge_noise_scale = 0.0;
        Ok(UnboundedOptions { params_override: Some(p), ..Default::default() })
    }
}

pub fn release_unbounded(
    g: &WeightedGraph,
    budget: &PrivacyBudget,
    mode: Mode,
    stream: &RandomStream,
    options: &UnboundedOptions,
) -> Result<UnboundedRelease> {
    budget.check_mode(mode)?;
    let n = g.n();
    let params = match options.params_override {
        Some(p) => p,
        None => calibrate_unbounded(n, budget, mode, options.c_l, options.c_t)?,
    };
    if params.hitting_set_size == 0 || params.hitting_set_size > n {
        return Err(Error::InvalidParameter(format!(
            "hitting set size {} out of range for n = {n}",
            params.hitting_set_size
        )));
    }
    if params.hop_radius == 0 {
        return Err(Error::InvalidParameter("hop radius must be >= 1".into()));
    }
    let hitting_set = match &options.hitting_set_override {
        Some(s) => {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != params.hitting_set_size || s.iter().any(|&x| x >= n) {
                return Err(Error::InvalidParameter("forced hitting set does not match L".into()));
            }
            s
        }
        None => stream.split(LABEL_HITTING_SET).sample_without_replacement(n, params.hitting_set_size)?,
    };

    let arcs: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.u, e.v, e.w)).collect();
    let sg = SignedGraph::new(n, &arcs)?;
    let exact_rows: Vec<Vec<f64>> = hitting_set
        .par_iter()
        .map(|&s| crate::graph::dijkstra_nonnegative(&sg, s))
        .collect::<Result<_>>()?;

    let l = hitting_set.len();
    let mut s_distances = DistanceMatrix::new(l);
    let mut s_noise = stream.split(LABEL_S_NOISE);
    for i in 0..l {
        for j in i + 1..l {
            let exact = exact_rows[i][hitting_set[j]];
            let noise = s_noise.laplace(params.noise_scale_s)?;
            s_distances.set_symmetric(i, j, exact + noise);
        }
    }

    let mut edge_noise = stream.split(LABEL_EDGE_NOISE);
    let mut noisy_edges = Vec::with_capacity(g.edges().len());
    for e in g.edges() {
        noisy_edges.push(Edge::new(e.u, e.v, e.w + edge_noise.laplace(params.edge_noise_scale)?));
    }

    let accounting = audit_unbounded(&params, g.edges().len(), budget, mode);
    Ok(UnboundedRelease {
        format_version: RELEASE_FORMAT_VERSION,
        n,
        mode,
        params,
        hitting_set,
        s_distances,
        noisy_edges,
        provenance: SeedProvenance { seed: stream.seed(), stream_id: stream.stream_id() },
        accounting,
    })
}

/// Post-processing state shared by every row of the reconstruction.
struct Reconstructor<'a> {
    release: &'a UnboundedRelease,
    noisy: SignedGraph,
    /// `short_s[i][v]`: hop-bounded noisy walk from `S[i]` to `v`.
    short_s: Vec<Vec<f64>>,
    component: Vec<usize>,
    component_size: Vec<usize>,
}

impl<'a> Reconstructor<'a> {
    fn new(release: &'a UnboundedRelease, t: &Topology) -> Result<Self> {
        check_release(release, t)?;
        let arcs: Vec<(usize, usize, f64)> = release.noisy_edges.iter().map(|e| (e.u, e.v, e.w)).collect();
        let noisy = SignedGraph::new(release.n, &arcs)?;
        let r = release.params.hop_radius;
        let short_s = release
            .hitting_set
            .par_iter()
            .map(|&s| noisy.hop_bounded_distances(s, r))
            .collect::<Result<Vec<_>>>()?;
        let component = connected_components(t);
        let mut component_size = vec![0usize; release.n];
        for &c in &component {
            component_size[c] += 1;
        }
        Ok(Reconstructor { release, noisy, short_s, component, component_size })
    }

    /// Clamped estimates from `u` to every vertex.
    fn row(&self, u: usize) -> Result<Vec<f64>> {
        let rel = self.release;
        let n = rel.n;
        let r = rel.params.hop_radius;
        // once every vertex of u's component is <= 0 the clamped row is all zeros
        let short_u = self.noisy.hop_bounded_until(u, r, self.component_size[self.component[u]])?;
        let l = rel.hitting_set.len();
        // a_u[j] = min over i ∈ S_u of short(u, S[i]) + d_S(i, j)
        let mut a_u = vec![f64::INFINITY; l];
        let mut any_near = false;
        for i in 0..l {
            let to_i = self.short_s[i][u];
            if to_i == f64::INFINITY {
                continue;
            }
            any_near = true;
            for (j, slot) in a_u.iter_mut().enumerate() {
                let cand = to_i + rel.s_distances.get(i, j);
                if cand < *slot {
                    *slot = cand;
                }
            }
        }
        let mut row = short_u;
        if any_near {
            for (j, &a) in a_u.iter().enumerate() {
                if a == f64::INFINITY {
                    continue;
                }
                for (v, slot) in row.iter_mut().enumerate() {
                    let cand = a + self.short_s[j][v];
                    if cand < *slot {
                        *slot = cand;
                    }
                }
            }
        }
        let needs_fallback = (0..n).any(|v| row[v] == f64::INFINITY && self.component[v] == self.component[u]);
        if needs_fallback {
            // connected but beyond reach of both estimators: shortest path on
            // the noisy weights clamped at zero
            let clamped: Vec<(usize, usize, f64)> =
                rel.noisy_edges.iter().map(|e| (e.u, e.v, e.w.max(0.0))).collect();
            let fallback = crate::graph::dijkstra_nonnegative(&SignedGraph::new(n, &clamped)?, u)?;
            for v in 0..n {
                if row[v] == f64::INFINITY {
                    row[v] = fallback[v];
                }
            }
        }
        for x in row.iter_mut() {
            *x = x.max(0.0);
        }
        row[u] = 0.0;
        Ok(row)
    }
}

fn check_release(release: &UnboundedRelease, t: &Topology) -> Result<()> {
    if release.format_version != RELEASE_FORMAT_VERSION {
        return Err(Error::InvalidParameter(format!(
            "unsupported release format version {}",
            release.format_version
        )));
    }
    if release.n != t.n() {
        return Err(Error::DimensionMismatch { expected: t.n(), found: release.n });
    }
    if release.noisy_edges.len() != t.edges().len()
        || release.noisy_edges.iter().zip(t.edges()).any(|(e, &(u, v))| (e.u, e.v) != (u, v))
    {
        return Err(Error::TopologyMismatch("release edges differ from the public topology".into()));
    }
    let l = release.hitting_set.len();
    if release.s_distances.n() != l || release.hitting_set.iter().any(|&s| s >= t.n()) {
        return Err(Error::InvalidParameter("malformed hitting set distances".into()));
    }
    Ok(())
}

/// Estimate of `d(u, v)` from the release and the public topology.
pub fn reconstruct_pair(release: &UnboundedRelease, t: &Topology, u: usize, v: usize) -> Result<f64> {
    t.check_vertex(u)?;
    t.check_vertex(v)?;
    if u == v {
        return Ok(0.0);
    }
    let rec = Reconstructor::new(release, t)?;
    let (a, b) = (u.min(v), u.max(v));
    Ok(rec.row(a)?[b])
}

/// Estimates for every pair; entry `(u, v)` with `u < v` is computed from
/// row `u` and mirrored, so the output is exactly symmetric.
pub fn reconstruct_all(release: &UnboundedRelease, t: &Topology) -> Result<DistanceMatrix> {
    let rec = Reconstructor::new(release, t)?;
    let rows = (0..release.n).into_par_iter().map(|u| rec.row(u)).collect::<Result<Vec<_>>>()?;
    let mut m = DistanceMatrix::from_rows(rows)?;
    for u in 0..release.n {
        for v in u + 1..release.n {
            let x = m.get(u, v);
            m.set(v, u, x);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::exact_apsp;

    fn path_graph(n: usize) -> WeightedGraph {
        let edges = (0..n - 1).map(|i| Edge::new(i, i + 1, 1.0)).collect();
        WeightedGraph::new(n, edges, None).unwrap()
    }

    fn triangle() -> WeightedGraph {
        WeightedGraph::new(3, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0), Edge::new(0, 2, 4.0)], None).unwrap()
    }

    fn approx_budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 1e-6).unwrap()
    }

    #[test]
    fn zero_noise_release_is_exact_on_s() {
        let g = path_graph(30);
        let b = approx_budget();
        let opts = UnboundedOptions::zero_noise(30, &b, Mode::Approx).unwrap();
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(3, 0), &opts).unwrap();
        let exact = exact_apsp(&g);
        for (i, &a) in rel.hitting_set.iter().enumerate() {
            for (j, &c) in rel.hitting_set.iter().enumerate() {
                assert_eq!(rel.s_distances.get(i, j), exact.get(a, c));
            }
        }
        for (e, o) in rel.noisy_edges.iter().zip(g.edges()) {
            assert_eq!(e.w, o.w);
        }
        assert!(!rel.accounting.within_budget);
    }

    #[test]
    fn single_vertex_release() {
        let g = WeightedGraph::new(1, vec![], None).unwrap();
        let b = approx_budget();
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(1, 0), &Default::default()).unwrap();
        assert_eq!(rel.hitting_set, vec![0]);
        assert!(rel.noisy_edges.is_empty());
        assert_eq!(rel.s_distances.rows(), vec![vec![0.0]]);
        assert!(rel.accounting.within_budget);
        let m = reconstruct_all(&rel, &g.topology()).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let g = triangle();
        let b = approx_budget();
        let s = RandomStream::new(42, 0);
        let a = serde_json::to_string(&release_unbounded(&g, &b, Mode::Approx, &s, &Default::default()).unwrap()).unwrap();
        let c = serde_json::to_string(&release_unbounded(&g, &b, Mode::Approx, &s, &Default::default()).unwrap()).unwrap();
        assert_eq!(a, c);
        let back: UnboundedRelease = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), a);
    }

    #[test]
    fn forced_hitting_set_on_long_path() {
        let g = path_graph(100);
        let b = approx_budget();
        let mut opts = UnboundedOptions::zero_noise(100, &b, Mode::Approx).unwrap();
        let p = opts.params_override.as_mut().unwrap();
        p.hitting_set_size = 3;
        p.hop_radius = 10;
        opts.hitting_set_override = Some(vec![0, 50, 99]);
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(0, 0), &opts).unwrap();
        let t = g.topology();
        assert_eq!(reconstruct_pair(&rel, &t, 0, 99).unwrap(), 99.0);
        assert_eq!(reconstruct_pair(&rel, &t, 99, 0).unwrap(), 99.0);
        assert_eq!(reconstruct_pair(&rel, &t, 45, 55).unwrap(), 10.0);
        assert_eq!(reconstruct_pair(&rel, &t, 7, 7).unwrap(), 0.0);
        // 20 and 75 are more than R hops from every member of S
        assert_eq!(reconstruct_pair(&rel, &t, 20, 75).unwrap(), 55.0);
    }

    #[test]
    fn zero_noise_reconstruction_matches_oracle() {
        let g = triangle();
        let b = approx_budget();
        let opts = UnboundedOptions::zero_noise(3, &b, Mode::Approx).unwrap();
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(9, 0), &opts).unwrap();
        let m = reconstruct_all(&rel, &g.topology()).unwrap();
        assert_eq!(m, exact_apsp(&g));
        assert_eq!(m.get(0, 2), 3.0);
    }

    #[test]
    fn reconstruction_checks_topology() {
        let g = triangle();
        let b = approx_budget();
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(9, 0), &Default::default()).unwrap();
        let other = Topology::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert!(matches!(reconstruct_all(&rel, &other), Err(Error::TopologyMismatch(_))));
        assert!(reconstruct_pair(&rel, &g.topology(), 0, 3).is_err());
    }

    #[test]
    fn pair_and_all_agree_and_are_symmetric() {
        let edges = vec![
            Edge::new(0, 1, 3.0),
            Edge::new(1, 2, 1.5),
            Edge::new(2, 3, 7.0),
            Edge::new(3, 4, 2.0),
            Edge::new(0, 4, 9.0),
            Edge::new(1, 3, 4.0),
        ];
        let g = WeightedGraph::new(6, edges, None).unwrap();
        let b = PrivacyBudget::pure(1.0).unwrap();
        let rel = release_unbounded(&g, &b, Mode::Pure, &RandomStream::new(5, 1), &Default::default()).unwrap();
        let t = g.topology();
        let m = reconstruct_all(&rel, &t).unwrap();
        assert!(m.is_symmetric());
        for u in 0..6 {
            assert_eq!(m.get(u, u), 0.0);
            for v in 0..6 {
                assert_eq!(m.get(u, v).to_bits(), reconstruct_pair(&rel, &t, u, v).unwrap().to_bits());
                // vertex 5 is isolated
                assert_eq!(m.get(u, v).is_infinite(), (u == 5) != (v == 5));
            }
        }
    }

    #[test]
    fn release_rejects_mode_mismatch() {
        let g = triangle();
        let b = PrivacyBudget::pure(1.0).unwrap();
        assert!(release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(1, 0), &Default::default()).is_err());
    }
}
