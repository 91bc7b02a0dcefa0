//! Self-checks of the invariants the mechanisms rely on, plus an auditor
//! that recomputes the accounting block of an emitted document.

use serde::{Deserialize, Serialize};

use crate::accountant::{
    audit_bounded_recursive, audit_unbounded, BoundedConfig, BoundedReleaseAccounting, Mode, PrivacyBudget,
};
use crate::bounded::{
    bounded_apsp, constrained_all_pairs, peel_with_probe, BoundedOutput, Color, ColoredMultigraph,
};
use crate::error::Result;
use crate::graph::{exact_apsp, Edge, Topology, WeightedGraph};
use crate::harness::{generate, GraphKind, WeightLaw};
use crate::randomness::{laplace_inverse_cdf, RandomStream};
use crate::unbounded::{release_unbounded, UnboundedOptions, UnboundedRelease};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub sensitivity_instances: usize,
    pub sampler_draws: usize,
    pub peel_traces: usize,
    pub csp_instances: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 2024,
            sensitivity_instances: 500,
            sampler_draws: 1_000_000,
            peel_traces: 1000,
            csp_instances: 1000,
        }
    }
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_sensitivity(cfg.sensitivity_instances, cfg.seed)?,
        check_samplers(cfg.sampler_draws, cfg.seed)?,
        check_peel_partition(cfg.peel_traces, cfg.seed)?,
        check_constrained_paths(cfg.csp_instances, cfg.seed)?,
        check_fresh_accounting(cfg.seed)?,
    ])
}

/// Random connected-or-not graph on 2..=8 vertices.
pub fn small_graph(stream: &mut RandomStream) -> Result<WeightedGraph> {
    let n = 2 + (stream.uniform_open() * 7.0) as usize;
    let p = 0.2 + 0.8 * stream.uniform_open();
    let seed = (stream.uniform_open() * u32::MAX as f64) as u64;
    generate(&GraphKind::ErdosRenyi { n, p }, &WeightLaw::Uniform { a: 0.0, b: 5.0 }, &RandomStream::new(seed, 1))
}

/// Largest `max |d − d′| − Δ` over every single-edge perturbation by `±Δ`
/// that keeps the weight positive.
pub fn sensitivity_excess(g: &WeightedGraph, delta: f64) -> Result<f64> {
    let base = exact_apsp(g);
    let mut worst = f64::NEG_INFINITY;
    for (i, e) in g.edges().iter().enumerate() {
        for sign in [1.0, -1.0] {
            let w = e.w + sign * delta;
            if !(w > 0.0) {
                continue;
            }
            let mut edges = g.edges().to_vec();
            edges[i] = Edge::new(e.u, e.v, w);
            let other = exact_apsp(&WeightedGraph::new(g.n(), edges, None)?);
            for u in 0..g.n() {
                for v in 0..g.n() {
                    let (a, b) = (base.get(u, v), other.get(u, v));
                    if a.is_finite() {
                        worst = worst.max((a - b).abs() - delta);
                    }
                }
            }
        }
    }
    Ok(worst)
}

pub fn check_sensitivity(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut stream = RandomStream::new(seed, 101);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let g = small_graph(&mut stream)?;
        for delta in [0.1, 1.0] {
            worst = worst.max(sensitivity_excess(&g, delta)?);
        }
    }
    Ok(CheckOutcome::new(
        "sensitivity",
        worst <= 1e-12,
        format!("{instances} graphs, worst max|d - d'| - Δ = {worst:.3e}"),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub laplace_mean: f64,
    pub laplace_mad: f64,
    pub expo_mean: f64,
    pub expo_mad: f64,
}

/// Sample mean and mean absolute deviation about the sample mean.
fn mean_mad(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let mad = xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / xs.len() as f64;
    (mean, mad)
}

pub fn sampler_stats(draws: usize, seed: u64, laplace_scale: f64, expo_mean: f64) -> Result<SamplerStats> {
    let mut s = RandomStream::new(seed, 202);
    let lap: Vec<f64> = (0..draws).map(|_| s.laplace(laplace_scale)).collect::<Result<_>>()?;
    let exp: Vec<f64> = (0..draws).map(|_| s.expo(expo_mean)).collect::<Result<_>>()?;
    let (laplace_mean, laplace_mad) = mean_mad(&lap);
    let (expo_mean_hat, expo_mad) = mean_mad(&exp);
    Ok(SamplerStats { laplace_mean, laplace_mad, expo_mean: expo_mean_hat, expo_mad })
}

pub fn check_samplers(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let (b, mu) = (1.7, 2.3);
    let st = sampler_stats(draws, seed, b, mu)?;
    // Lap(b): mean 0, E|X| = b. Expo(μ): mean μ, E|X − μ| = 2μ/e.
    let expo_mad = 2.0 * mu / std::f64::consts::E;
    let spot = laplace_inverse_cdf(0.9, 1.0);
    let ok = st.laplace_mean.abs() <= 0.01 * b
        && (st.laplace_mad / b - 1.0).abs() <= 0.01
        && (st.expo_mean / mu - 1.0).abs() <= 0.01
        && (st.expo_mad / expo_mad - 1.0).abs() <= 0.01
        && (spot - 5f64.ln()).abs() <= 1e-9;
    Ok(CheckOutcome::new(
        "samplers",
        ok,
        format!(
            "{draws} draws: Lap mean {:.4} MAD {:.4} (b = {b}); Expo mean {:.4} MAD {:.4} (μ = {mu}); F⁻¹(0.9) = {spot:.10}",
            st.laplace_mean, st.laplace_mad, st.expo_mean, st.expo_mad
        ),
    ))
}

fn random_topology(stream: &mut RandomStream) -> Result<Topology> {
    let pick = (stream.uniform_open() * 3.0) as usize;
    let seed = (stream.uniform_open() * u32::MAX as f64) as u64;
    let kind = match pick {
        0 => GraphKind::Path { n: 2 + (stream.uniform_open() * 60.0) as usize },
        1 => {
            let rows = 1 + (stream.uniform_open() * 8.0) as usize;
            let cols = 1 + (stream.uniform_open() * 8.0) as usize;
            GraphKind::Grid { rows, cols }
        }
        _ => GraphKind::ErdosRenyi {
            n: 2 + (stream.uniform_open() * 60.0) as usize,
            p: 0.01 + 0.2 * stream.uniform_open(),
        },
    };
    Ok(generate(&kind, &WeightLaw::Constant { c: 1.0 }, &RandomStream::new(seed, 2))?.topology())
}

pub fn check_peel_partition(traces: usize, seed: u64) -> Result<CheckOutcome> {
    let mut stream = RandomStream::new(seed, 303);
    let mut steps = 0usize;
    for i in 0..traces {
        let t = random_topology(&mut stream)?;
        let r = 0.5 + 4.5 * stream.uniform_open();
        let cap = 1 + (stream.uniform_open() * t.n() as f64) as usize;
        let probe = 6.0 * stream.uniform_open();
        let trace = peel_with_probe(&t, r, cap, probe, &RandomStream::new(seed, 10_000 + i as u64))?;
        steps += trace.steps.len();
        if let Err(e) = trace.verify(&t) {
            return Ok(CheckOutcome::new("peel-partition", false, format!("trace {i}: {e}")));
        }
    }
    Ok(CheckOutcome::new("peel-partition", true, format!("{traces} traces, {steps} peel steps verified")))
}

/// Exhaustive minimum over every budget-respecting walk from `u`; `0` at `u`.
pub fn brute_force_from(mg: &ColoredMultigraph, u: usize) -> Vec<f64> {
    // only the cheapest parallel edge of each colour can lie on a minimum walk
    let mut cheapest: std::collections::BTreeMap<(usize, usize, usize), f64> = std::collections::BTreeMap::new();
    for (list, color) in [(&mg.red, 0), (&mg.blue, 1), (&mg.green, 2)] {
        for &(a, b, w) in list {
            let slot = cheapest.entry((a.min(b), a.max(b), color)).or_insert(f64::INFINITY);
            *slot = slot.min(w);
        }
    }
    let mut adj: Vec<Vec<(usize, f64, Color)>> = vec![Vec::new(); mg.n];
    for (&(a, b, c), &w) in &cheapest {
        let color = [Color::Red, Color::Blue, Color::Green][c];
        adj[a].push((b, w, color));
        adj[b].push((a, w, color));
    }
    let mut best = vec![f64::INFINITY; mg.n];
    fn walk(
        adj: &[Vec<(usize, f64, Color)>],
        mg: &ColoredMultigraph,
        x: usize,
        acc: f64,
        used: (usize, usize, usize),
        best: &mut [f64],
    ) {
        if acc < best[x] {
            best[x] = acc;
        }
        for &(y, w, c) in &adj[x] {
            let next = match c {
                Color::Red => (used.0 + 1, used.1, used.2),
                Color::Blue => (used.0, used.1 + 1, used.2),
                Color::Green => (used.0, used.1, used.2 + 1),
            };
            if next.0 <= mg.max_red && next.1 <= mg.max_blue && next.2 <= mg.max_green {
                walk(adj, mg, y, acc + w, next, best);
            }
        }
    }
    walk(&adj, mg, u, 0.0, (0, 0, 0), &mut best);
    best[u] = 0.0;
    best
}

pub fn random_multigraph(stream: &mut RandomStream) -> Result<ColoredMultigraph> {
    let n = 2 + (stream.uniform_open() * 7.0) as usize;
    let budget = |s: &mut RandomStream| (s.uniform_open() * 4.0) as usize;
    let (r, b, g) = (budget(stream), budget(stream), budget(stream));
    let mut mg = ColoredMultigraph::new(n, r, b, g);
    let m = (stream.uniform_open() * 15.0) as usize;
    for _ in 0..m {
        let u = (stream.uniform_open() * n as f64) as usize;
        let mut v = (stream.uniform_open() * (n - 1) as f64) as usize;
        if v >= u {
            v += 1;
        }
        let color = match (stream.uniform_open() * 3.0) as usize {
            0 => Color::Red,
            1 => Color::Blue,
            _ => Color::Green,
        };
        let w = -2.0 + 8.0 * stream.uniform_open();
        mg.add(color, u, v, w)?;
    }
    Ok(mg)
}

pub fn check_constrained_paths(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut stream = RandomStream::new(seed, 404);
    for i in 0..instances {
        let mg = random_multigraph(&mut stream)?;
        let dp = constrained_all_pairs(&mg)?;
        for u in 0..mg.n {
            let brute = brute_force_from(&mg, u);
            for v in 0..mg.n {
                if dp.get(u, v).to_bits() != brute[v].to_bits() {
                    return Ok(CheckOutcome::new(
                        "constrained-paths",
                        false,
                        format!("instance {i}: ({u}, {v}) dp {} vs exhaustive {}", dp.get(u, v), brute[v]),
                    ));
                }
            }
        }
    }
    Ok(CheckOutcome::new("constrained-paths", true, format!("{instances} multigraphs match exhaustive search")))
}

/// Releases of both kinds on a small graph, each re-audited.
pub fn check_fresh_accounting(seed: u64) -> Result<CheckOutcome> {
    let g = generate(&GraphKind::Grid { rows: 5, cols: 5 }, &WeightLaw::Uniform { a: 0.0, b: 1.0 }, &RandomStream::new(seed, 5))?;
    let mut outcomes = Vec::new();
    for mode in [Mode::Pure, Mode::Approx] {
        let b = PrivacyBudget::new(1.0, if mode == Mode::Pure { 0.0 } else { 1e-6 })?;
        let stream = RandomStream::new(seed, 6);
        let rel = release_unbounded(&g, &b, mode, &stream, &UnboundedOptions::default())?;
        outcomes.push(audit_document(&serde_json::to_value(&rel)?));
        let out = bounded_apsp(&g, &b, mode, &stream, &BoundedConfig::default(), false)?;
        outcomes.push(audit_document(&serde_json::to_value(&out)?));
    }
    let passed = outcomes.iter().all(|o| o.passed);
    let detail = outcomes.iter().map(|o| o.detail.clone()).collect::<Vec<_>>().join("; ");
    Ok(CheckOutcome::new("accounting", passed, detail))
}

/// Recomputes the privacy cost of an emitted release or bounded output and
/// checks it against the requested budget.
pub fn audit_document(doc: &serde_json::Value) -> CheckOutcome {
    if doc.get("noisy_edges").is_some() {
        match serde_json::from_value::<UnboundedRelease>(doc.clone()) {
            Ok(rel) => audit_unbounded_release(&rel),
            Err(e) => CheckOutcome::new("accounting", false, format!("unreadable release: {e}")),
        }
    } else if doc.get("matrix").is_some() {
        match serde_json::from_value::<BoundedOutput>(doc.clone()) {
            Ok(out) => audit_bounded_output(&out),
            Err(e) => CheckOutcome::new("accounting", false, format!("unreadable bounded output: {e}")),
        }
    } else {
        CheckOutcome::new("accounting", false, "document has no accounting block".into())
    }
}

pub fn audit_unbounded_release(rel: &UnboundedRelease) -> CheckOutcome {
    let req = rel.accounting.requested;
    let again = audit_unbounded(&rel.params, rel.noisy_edges.len(), &req, rel.mode);
    let consistent = again == rel.accounting;
    let fits = again.total.fits(req.epsilon, req.delta);
    CheckOutcome::new(
        "accounting",
        consistent && fits && again.within_budget,
        format!(
            "unbounded/{}: spent (ε {:.6}, δ {:.3e}) of (ε {}, δ {:.3e}){}",
            rel.mode,
            again.total.epsilon,
            again.total.delta,
            req.epsilon,
            req.delta,
            if consistent { "" } else { ", embedded block disagrees" }
        ),
    )
}

pub fn audit_bounded_output(out: &BoundedOutput) -> CheckOutcome {
    let acc = &out.accounting;
    let req = acc.requested;
    let root = &acc.root;
    let mut problems = Vec::new();
    let expected_delta = match out.mode {
        Mode::Pure => 0.0,
        Mode::Approx => crate::accountant::rescale_delta_for_bounded(req.delta, out.n),
    };
    if root.n > 1 && (root.budget.epsilon != req.epsilon || root.budget.delta != expected_delta) {
        problems.push("internal budget is not (ε, δ/3n²)".to_string());
    }
    let recomputed_total = match root.kind.as_str() {
        "recursive" => match &out.params {
            Some(p) => {
                let again = audit_bounded_recursive(p, out.edge_count, &root.budget, out.mode);
                if again.total != root.total || again.per_iteration != root.per_iteration {
                    problems.push("recursive cost disagrees".into());
                }
                Some(again.total)
            }
            None => None,
        },
        "base" => match &root.base_params {
            Some(p) => {
                let again = audit_unbounded(p, out.edge_count, &root.budget, out.mode);
                if Some(&again) != root.base.as_ref() {
                    problems.push("base cost disagrees".into());
                }
                Some(again.total)
            }
            None => None,
        },
        "trivial" => Some(crate::accountant::Cost::ZERO),
        _ => None,
    };
    let Some(total) = recomputed_total else {
        return CheckOutcome::new("accounting", false, "bounded output lacks the data to recompute its cost".into());
    };
    if !total.fits(root.budget.epsilon, root.budget.delta) {
        problems.push("call exceeds its budget".into());
    }
    let again = BoundedReleaseAccounting::new(req, out.mode, out.n, root.clone());
    if again.l1_cost != acc.l1_cost {
        problems.push("ℓ1 cost disagrees".into());
    }
    if !again.l1_cost.fits(req.epsilon, req.delta) {
        problems.push("ℓ1 cost exceeds the request".into());
    }
    if acc.calls_within_budget != acc.calls_audited {
        problems.push(format!("{} of {} recursive calls over budget", acc.calls_audited - acc.calls_within_budget, acc.calls_audited));
    }
    CheckOutcome::new(
        "accounting",
        problems.is_empty() && acc.within_budget,
        format!(
            "bounded/{}: ℓ1 cost (ε {:.6}, δ {:.3e}) of (ε {}, δ {:.3e}){}",
            out.mode,
            again.l1_cost.epsilon,
            again.l1_cost.delta,
            req.epsilon,
            req.delta,
            if problems.is_empty() { String::new() } else { format!(", {}", problems.join(", ")) }
        ),
    )
}
