//! Workload generators, error metrics and seeded sweeps.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{predict_error_bound, Algorithm, BoundedConfig, Mode, PrivacyBudget};
use crate::bounded::bounded_apsp;
use crate::error::{Error, Result};
use crate::graph::{exact_apsp, DistanceMatrix, Edge, WeightedGraph};
use crate::randomness::RandomStream;
use crate::unbounded::{reconstruct_all, release_unbounded, UnboundedOptions};

/// Stream id for graph generation; mechanisms draw from [`MECHANISM_STREAM`].
pub const GRAPH_STREAM: u64 = 0x0067_7261_7068;
pub const MECHANISM_STREAM: u64 = 0x6d65_6368;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Path { n: usize },
    Cycle { n: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { n: usize, p: f64 },
    /// Erdős–Rényi with `p = degree / (n − 1)`, capped at 1.
    ErdosRenyiDegree { n: usize, degree: f64 },
    Star { n: usize },
}

impl GraphKind {
    pub fn n(&self) -> usize {
        match *self {
            GraphKind::Path { n }
            | GraphKind::Cycle { n }
            | GraphKind::ErdosRenyi { n, .. }
            | GraphKind::ErdosRenyiDegree { n, .. }
            | GraphKind::Star { n } => n,
            GraphKind::Grid { rows, cols } => rows * cols,
        }
    }

    /// Same family with `n` vertices; grids become the nearest square.
    pub fn with_n(&self, n: usize) -> GraphKind {
        match *self {
            GraphKind::Path { .. } => GraphKind::Path { n },
            GraphKind::Cycle { .. } => GraphKind::Cycle { n },
            GraphKind::ErdosRenyi { p, .. } => GraphKind::ErdosRenyi { n, p },
            GraphKind::ErdosRenyiDegree { degree, .. } => GraphKind::ErdosRenyiDegree { n, degree },
            GraphKind::Star { .. } => GraphKind::Star { n },
            GraphKind::Grid { .. } => {
                let side = (n as f64).sqrt().round().max(1.0) as usize;
                GraphKind::Grid { rows: side, cols: side }
            }
        }
    }
}

/// Edge weight distribution. `Uniform` draws from `(a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum WeightLaw {
    Uniform { a: f64, b: f64 },
    Constant { c: f64 },
}

impl WeightLaw {
    pub fn supremum(&self) -> f64 {
        match *self {
            WeightLaw::Uniform { b, .. } => b,
            WeightLaw::Constant { c } => c,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightLaw::Uniform { a, b } => a >= 0.0 && b > a && b.is_finite(),
            WeightLaw::Constant { c } => c > 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid weight law {self:?}")))
        }
    }

    fn draw(&self, stream: &mut RandomStream) -> f64 {
        match *self {
            WeightLaw::Uniform { a, b } => b - (b - a) * stream.uniform_open(),
            WeightLaw::Constant { c } => c,
        }
    }
}

fn topology_edges(kind: &GraphKind, stream: &mut RandomStream) -> Result<(usize, Vec<(usize, usize)>)> {
    let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
    Ok(match *kind {
        GraphKind::Path { n } => {
            if n == 0 {
                return bad("path needs n >= 1");
            }
            (n, (1..n).map(|i| (i - 1, i)).collect())
        }
        GraphKind::Cycle { n } => {
            if n < 3 {
                return bad("cycle needs n >= 3");
            }
            let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            e.push((0, n - 1));
            (n, e)
        }
        GraphKind::Grid { rows, cols } => {
            if rows == 0 || cols == 0 {
                return bad("grid needs positive dimensions");
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut e = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        e.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        e.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            (rows * cols, e)
        }
        GraphKind::ErdosRenyi { n, p } => {
            if n == 0 || !(p > 0.0 && p <= 1.0) {
                return bad("erdos_renyi needs n >= 1 and p in (0, 1]");
            }
            let mut e = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if p >= 1.0 || stream.uniform_open() < p {
                        e.push((u, v));
                    }
                }
            }
            (n, e)
        }
        GraphKind::ErdosRenyiDegree { n, degree } => {
            if n < 2 || !(degree > 0.0) {
                return bad("erdos_renyi_degree needs n >= 2 and degree > 0");
            }
            let p = (degree / (n - 1) as f64).min(1.0);
            return topology_edges(&GraphKind::ErdosRenyi { n, p }, stream);
        }
        GraphKind::Star { n } => {
            if n == 0 {
                return bad("star needs n >= 1");
            }
            (n, (1..n).map(|i| (0, i)).collect())
        }
    })
}

/// Deterministic per `(kind, law, stream)`. The weight bound is set to the
/// law's supremum.
pub fn generate(kind: &GraphKind, law: &WeightLaw, stream: &RandomStream) -> Result<WeightedGraph> {
    law.validate()?;
    let (n, pairs) = topology_edges(kind, &mut stream.split(1))?;
    let mut weights = stream.split(2);
    let edges = pairs.into_iter().map(|(u, v)| Edge::new(u, v, law.draw(&mut weights))).collect();
    WeightedGraph::new(n, edges, Some(law.supremum()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_err: f64,
    pub mean_err: f64,
    pub quantiles: Quantiles,
    /// Unordered pairs `u < v` with finite true distance.
    pub connected_pairs: usize,
    pub disconnected_pairs: usize,
}

/// Additive error over unordered connected pairs. An infinite estimate of
/// a finite distance counts as infinite error.
pub fn evaluate(estimate: &DistanceMatrix, truth: &DistanceMatrix) -> Result<ErrorReport> {
    let n = truth.n();
    if estimate.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: estimate.n() });
    }
    let mut errors = Vec::new();
    let mut disconnected = 0usize;
    for u in 0..n {
        for v in u + 1..n {
            let d = truth.get(u, v);
            if d.is_finite() {
                errors.push((estimate.get(u, v) - d).abs());
            } else {
                disconnected += 1;
            }
        }
    }
    if errors.is_empty() {
        return Ok(ErrorReport {
            max_err: 0.0,
            mean_err: 0.0,
            quantiles: Quantiles { p50: 0.0, p90: 0.0, p99: 0.0 },
            connected_pairs: 0,
            disconnected_pairs: disconnected,
        });
    }
    let mean_err = errors.iter().sum::<f64>() / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    let q = |p: f64| errors[((errors.len() - 1) as f64 * p).round() as usize];
    Ok(ErrorReport {
        max_err: *errors.last().unwrap(),
        mean_err,
        quantiles: Quantiles { p50: q(0.5), p90: q(0.9), p99: q(0.99) },
        connected_pairs: errors.len(),
        disconnected_pairs: disconnected,
    })
}

/// Least-squares slope of `ln error` against `ln n`.
pub fn scaling_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter(format!("scaling fit needs >= 4 points, got {}", points.len())));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidParameter("scaling fit needs strictly increasing n".into()));
    }
    if points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter("scaling fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Median of a nonempty slice; the mean of the middle pair for even length.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub generator: GraphKind,
    pub weights: WeightLaw,
    /// Vertex counts to sweep; empty means the generator's own size.
    #[serde(default)]
    pub sizes: Vec<usize>,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub epsilon: f64,
    #[serde(default)]
    pub delta: f64,
    pub seeds: Vec<u64>,
    /// CSV destination, relative to the experiment file when run from the CLI.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default = "one")]
    pub c_l: f64,
    #[serde(default = "one")]
    pub c_t: f64,
    #[serde(default)]
    pub bounded: Option<BoundedConfig>,
}

fn one() -> f64 {
    1.0
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<PrivacyBudget> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("experiment needs at least one seed".into()));
        }
        let budget = PrivacyBudget::new(self.epsilon, self.delta)?;
        budget.check_mode(self.mode)?;
        self.weights.validate()?;
        Ok(budget)
    }

    pub fn kinds(&self) -> Vec<GraphKind> {
        if self.sizes.is_empty() {
            vec![self.generator]
        } else {
            self.sizes.iter().map(|&n| self.generator.with_n(n)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub max_err: f64,
    pub mean_err: f64,
    pub predicted: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median_max_err: f64,
    pub median_mean_err: f64,
    pub predicted: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub epsilon: f64,
    pub delta: f64,
    pub sizes: Vec<SizeSummary>,
    /// Log-log slope of median max error, when at least four sizes ran.
    pub slope: Option<f64>,
}

/// Error of one mechanism run against the exact oracle.
pub fn run_instance(
    g: &WeightedGraph,
    algorithm: Algorithm,
    mode: Mode,
    budget: &PrivacyBudget,
    seed: u64,
    options: &UnboundedOptions,
    bounded: &BoundedConfig,
) -> Result<(DistanceMatrix, ErrorReport)> {
    let stream = RandomStream::new(seed, MECHANISM_STREAM);
    let estimate = match algorithm {
        Algorithm::Unbounded => {
            let rel = release_unbounded(g, budget, mode, &stream, options)?;
            reconstruct_all(&rel, &g.topology())?
        }
        Algorithm::Bounded => bounded_apsp(g, budget, mode, &stream, bounded, false)?.matrix,
    };
    let report = evaluate(&estimate, &exact_apsp(g))?;
    Ok((estimate, report))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Vec<SweepRow>, SweepSummary)> {
    let budget = spec.validate()?;
    let options = UnboundedOptions { c_l: spec.c_l, c_t: spec.c_t, ..Default::default() };
    let bounded = spec.bounded.unwrap_or_default();
    let jobs: Vec<(GraphKind, u64)> =
        spec.kinds().into_iter().flat_map(|k| spec.seeds.iter().map(move |&s| (k, s))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(kind, seed)| {
            let g = generate(&kind, &spec.weights, &RandomStream::new(seed, GRAPH_STREAM))?;
            let a = spec.weights.supremum();
            let start = Instant::now();
            let (_, report) = run_instance(&g, spec.algorithm, spec.mode, &budget, seed, &options, &bounded)?;
            Ok(SweepRow {
                n: g.n(),
                seed,
                algorithm: spec.algorithm,
                mode: spec.mode,
                epsilon: spec.epsilon,
                delta: spec.delta,
                a,
                max_err: report.max_err,
                mean_err: report.mean_err,
                predicted: predict_error_bound(g.n(), a, &budget, spec.algorithm, spec.mode),
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<_>>()?;
    let summary = summarize(spec, &rows);
    Ok((rows, summary))
}

pub fn summarize(spec: &ExperimentSpec, rows: &[SweepRow]) -> SweepSummary {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let per_size: Vec<SizeSummary> = sizes
        .iter()
        .map(|&n| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.n == n).collect();
            SizeSummary {
                n,
                median_max_err: median(&group.iter().map(|r| r.max_err).collect::<Vec<_>>()),
                median_mean_err: median(&group.iter().map(|r| r.mean_err).collect::<Vec<_>>()),
                predicted: group[0].predicted,
                seeds: group.len(),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = per_size.iter().map(|s| (s.n as f64, s.median_max_err)).collect();
    SweepSummary {
        algorithm: spec.algorithm,
        mode: spec.mode,
        epsilon: spec.epsilon,
        delta: spec.delta,
        sizes: per_size,
        slope: scaling_fit(&points).ok(),
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_experiment_spec(path: &Path) -> Result<ExperimentSpec> {
    Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(seed: u64) -> RandomStream {
        RandomStream::new(seed, GRAPH_STREAM)
    }

    #[test]
    fn generator_examples() {
        let g = generate(&GraphKind::Path { n: 3 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).unwrap();
        assert_eq!(g.edges(), &[Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0)]);
        assert_eq!(g.weight_bound(), Some(1.0));
        let grid = generate(&GraphKind::Grid { rows: 4, cols: 4 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).unwrap();
        assert_eq!(grid.edges().len(), 24);
        let k = generate(&GraphKind::ErdosRenyi { n: 100, p: 1.0 }, &WeightLaw::Constant { c: 2.0 }, &s(0)).unwrap();
        assert_eq!(k.edges().len(), 4950);
        let c = generate(&GraphKind::Cycle { n: 5 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).unwrap();
        assert_eq!(c.edges().len(), 5);
        let st = generate(&GraphKind::Star { n: 6 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).unwrap();
        assert!(st.edges().iter().all(|e| e.u == 0));
        assert!(generate(&GraphKind::ErdosRenyi { n: 10, p: 0.0 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).is_err());
        assert!(generate(&GraphKind::ErdosRenyi { n: 10, p: 1.5 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).is_err());
        assert!(generate(&GraphKind::Path { n: 4 }, &WeightLaw::Uniform { a: 2.0, b: 1.0 }, &s(0)).is_err());
    }

    #[test]
    fn uniform_weights_stay_in_range() {
        let law = WeightLaw::Uniform { a: 0.0, b: 10.0 };
        let g = generate(&GraphKind::ErdosRenyi { n: 60, p: 0.3 }, &law, &s(4)).unwrap();
        assert!(g.edges().iter().all(|e| e.w > 0.0 && e.w <= 10.0));
        let again = generate(&GraphKind::ErdosRenyi { n: 60, p: 0.3 }, &law, &s(4)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn evaluate_examples() {
        let g = generate(&GraphKind::Path { n: 5 }, &WeightLaw::Constant { c: 1.0 }, &s(0)).unwrap();
        let truth = exact_apsp(&g);
        assert_eq!(evaluate(&truth, &truth).unwrap().max_err, 0.0);
        let mut est = truth.clone();
        est.set_symmetric(1, 3, truth.get(1, 3) + 5.0);
        let r = evaluate(&est, &truth).unwrap();
        assert_eq!(r.max_err, 5.0);
        assert_eq!(r.connected_pairs, 10);
        assert!((r.mean_err - 0.5).abs() < 1e-15);
        assert!(evaluate(&DistanceMatrix::new(4), &truth).is_err());
    }

    #[test]
    fn disconnected_pairs_are_counted_not_scored() {
        let g = WeightedGraph::new(4, vec![Edge::new(0, 1, 1.0)], None).unwrap();
        let truth = exact_apsp(&g);
        let r = evaluate(&DistanceMatrix::new(4), &truth).unwrap();
        assert_eq!(r.connected_pairs, 1);
        assert_eq!(r.disconnected_pairs, 5);
        assert_eq!(r.max_err, f64::INFINITY);
    }

    #[test]
    fn scaling_fit_recovers_exponents() {
        for exp in [0.5, 2.0 / 3.0] {
            let pts: Vec<(f64, f64)> = [128.0, 256.0, 512.0, 1024.0].iter().map(|&n: &f64| (n, 3.7 * n.powf(exp))).collect();
            assert!((scaling_fit(&pts).unwrap() - exp).abs() < 1e-9);
        }
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(scaling_fit(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        assert!(scaling_fit(&[(2.0, 1.0), (1.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
    }

    #[test]
    fn csv_has_expected_header() {
        let row = SweepRow {
            n: 4,
            seed: 1,
            algorithm: Algorithm::Unbounded,
            mode: Mode::Pure,
            epsilon: 1.0,
            delta: 0.0,
            a: 1.0,
            max_err: 2.0,
            mean_err: 1.0,
            predicted: 3.0,
            runtime_ms: 0.5,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "n,seed,algorithm,mode,epsilon,delta,A,max_err,mean_err,predicted,runtime_ms"
        );
    }

    #[test]
    fn experiment_spec_rejects_empty_seeds() {
        let spec = ExperimentSpec {
            generator: GraphKind::Path { n: 5 },
            weights: WeightLaw::Constant { c: 1.0 },
            sizes: vec![],
            algorithm: Algorithm::Unbounded,
            mode: Mode::Pure,
            epsilon: 1.0,
            delta: 0.0,
            seeds: vec![],
            output: None,
            summary: None,
            c_l: 1.0,
            c_t: 1.0,
            bounded: None,
        };
        assert!(spec.validate().is_err());
        let ok = ExperimentSpec { seeds: vec![1, 2], ..spec };
        let (rows, summary) = run_experiment(&ok).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(summary.sizes[0].seeds, 2);
        assert!(summary.slope.is_none());
    }

    proptest! {
        #[test]
        fn evaluate_is_label_invariant(seed in 0u64..1000, shift in 1usize..12) {
            let g = generate(&GraphKind::ErdosRenyi { n: 12, p: 0.4 }, &WeightLaw::Uniform { a: 0.0, b: 3.0 }, &s(seed)).unwrap();
            let truth = exact_apsp(&g);
            let mut est = truth.clone();
            let mut noise = RandomStream::new(seed, 99);
            for u in 0..12 {
                for v in u + 1..12 {
                    let x = est.get(u, v) + noise.laplace(1.0).unwrap();
                    est.set_symmetric(u, v, x);
                }
            }
            let perm: Vec<usize> = (0..12).map(|i| (i + shift) % 12).collect();
            let permute = |m: &DistanceMatrix| {
                let mut p = DistanceMatrix::new(12);
                for u in 0..12 {
                    for v in 0..12 {
                        p.set(perm[u], perm[v], m.get(u, v));
                    }
                }
                p
            };
            let a = evaluate(&est, &truth).unwrap();
            let b = evaluate(&permute(&est), &permute(&truth)).unwrap();
            prop_assert_eq!(a.max_err, b.max_err);
            prop_assert_eq!(a.quantiles, b.quantiles);
            prop_assert!((a.mean_err - b.mean_err).abs() <= 1e-12 * a.mean_err.max(1.0));
            prop_assert!(a.max_err >= a.mean_err && a.mean_err >= 0.0);
        }
    }
}
