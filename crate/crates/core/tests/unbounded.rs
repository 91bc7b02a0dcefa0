use dpapsp::accountant::{calibrate_unbounded, predict_error_bound, Algorithm, Mode, PrivacyBudget};
use dpapsp::graph::{exact_apsp, Edge, Topology, WeightedGraph};
use dpapsp::harness::{evaluate, generate, median, GraphKind, WeightLaw, GRAPH_STREAM, MECHANISM_STREAM};
use dpapsp::randomness::RandomStream;
use dpapsp::unbounded::{reconstruct_all, reconstruct_pair, release_unbounded, UnboundedOptions, UnboundedRelease};

fn approx() -> PrivacyBudget {
    PrivacyBudget::new(1.0, 1e-6).unwrap()
}

fn path(n: usize) -> WeightedGraph {
    WeightedGraph::new(n, (1..n).map(|i| Edge::new(i - 1, i, 1.0)).collect(), None).unwrap()
}

#[test]
fn hitting_set_misses_a_prefix_at_most_as_often_as_predicted() {
    let (n, l, r) = (200, 20, 10);
    let g = path(n);
    let b = approx();
    let mut params = calibrate_unbounded(n, &b, Mode::Approx, 1.0, 1.0).unwrap();
    params.hitting_set_size = l;
    params.hop_radius = r;
    let options = UnboundedOptions { params_override: Some(params), ..Default::default() };
    let trials = 1000;
    let misses = (0..trials)
        .filter(|&i| {
            let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(i, MECHANISM_STREAM), &options).unwrap();
            assert_eq!(rel.hitting_set.len(), l);
            rel.hitting_set.iter().all(|&s| s >= r)
        })
        .count();
    let bound = (1.0 - l as f64 / n as f64).powi(r as i32);
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    let rate = misses as f64 / trials as f64;
    assert!(rate <= bound + 3.0 * sigma, "miss rate {rate} vs bound {bound}");
}

#[test]
fn edge_noise_likelihood_ratio_is_bounded_by_half_epsilon() {
    let eps = 0.8;
    let b = PrivacyBudget::new(eps, 1e-6).unwrap();
    let mut stream = RandomStream::new(5, 0);
    for trial in 0..200u64 {
        let n = 2 + (stream.uniform_open() * 5.0) as usize;
        let mut edges: Vec<Edge> = (1..n).map(|i| Edge::new(i - 1, i, 0.5 + 5.0 * stream.uniform_open())).collect();
        if n > 2 {
            edges.push(Edge::new(0, n - 1, 0.5 + 5.0 * stream.uniform_open()));
        }
        let g = WeightedGraph::new(n, edges.clone(), None).unwrap();
        let which = (stream.uniform_open() * edges.len() as f64) as usize;
        let mut shifted = edges.clone();
        shifted[which].w += 1.0;
        let g2 = WeightedGraph::new(n, shifted.clone(), None).unwrap();

        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(trial, MECHANISM_STREAM), &UnboundedOptions::default()).unwrap();
        let scale = rel.params.edge_noise_scale;
        assert_eq!(scale, 2.0 / eps);
        // Laplace log-density ratio of the observed vector under both weight vectors
        let llr: f64 = rel
            .noisy_edges
            .iter()
            .zip(edges.iter().zip(&shifted))
            .map(|(y, (w, w2))| ((y.w - w2.w).abs() - (y.w - w.w).abs()) / scale)
            .sum();
        assert!(llr.abs() <= eps / 2.0 + 1e-12, "llr {llr}");
        assert!(rel.accounting.s_distance_cost.fits(eps / 2.0, b.delta));

        let rel2 = release_unbounded(&g2, &b, Mode::Approx, &RandomStream::new(trial, MECHANISM_STREAM), &UnboundedOptions::default()).unwrap();
        assert_eq!(rel.params, rel2.params);
    }
}

#[test]
fn larger_hitting_set_noise_never_lowers_median_error() {
    let g = generate(
        &GraphKind::ErdosRenyiDegree { n: 150, degree: 4.0 },
        &WeightLaw::Uniform { a: 0.0, b: 100.0 },
        &RandomStream::new(3, GRAPH_STREAM),
    )
    .unwrap();
    let truth = exact_apsp(&g);
    let b = approx();
    let base = calibrate_unbounded(g.n(), &b, Mode::Approx, 1.0, 1.0).unwrap();
    let mut medians = Vec::new();
    for factor in [0.0, 1.0, 8.0, 64.0] {
        let mut p = base;
        p.noise_scale_s = base.noise_scale_s * factor;
        let options = UnboundedOptions { params_override: Some(p), ..Default::default() };
        let errs: Vec<f64> = (0..20u64)
            .map(|seed| {
                let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(seed, MECHANISM_STREAM), &options).unwrap();
                evaluate(&reconstruct_all(&rel, &g.topology()).unwrap(), &truth).unwrap().max_err
            })
            .collect();
        medians.push(median(&errs));
    }
    for w in medians.windows(2) {
        assert!(w[0] <= w[1], "{medians:?}");
    }
}

#[test]
fn error_on_er_500_is_within_ten_times_the_bound() {
    let b = approx();
    let law = WeightLaw::Uniform { a: 0.0, b: 10.0 };
    let predicted = predict_error_bound(500, 10.0, &b, Algorithm::Unbounded, Mode::Approx);
    for seed in 0..20u64 {
        let g = generate(&GraphKind::ErdosRenyi { n: 500, p: 0.05 }, &law, &RandomStream::new(seed, GRAPH_STREAM)).unwrap();
        let rel = release_unbounded(&g, &b, Mode::Approx, &RandomStream::new(seed, MECHANISM_STREAM), &UnboundedOptions::default()).unwrap();
        let report = evaluate(&reconstruct_all(&rel, &g.topology()).unwrap(), &exact_apsp(&g)).unwrap();
        assert!(report.max_err <= 10.0 * predicted, "seed {seed}: {} vs {predicted}", report.max_err);
    }
}

#[test]
fn single_vertex_release() {
    let g = WeightedGraph::new(1, vec![], None).unwrap();
    let rel = release_unbounded(&g, &approx(), Mode::Approx, &RandomStream::new(0, 0), &UnboundedOptions::default()).unwrap();
    assert!(rel.noisy_edges.is_empty());
    assert_eq!(rel.hitting_set, vec![0]);
    assert_eq!(rel.s_distances.get(0, 0), 0.0);
    assert_eq!(reconstruct_all(&rel, &g.topology()).unwrap().get(0, 0), 0.0);
}

#[test]
fn disconnected_pairs_are_infinite_and_others_finite() {
    let g = WeightedGraph::new(5, vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0), Edge::new(3, 4, 1.0)], None).unwrap();
    let rel = release_unbounded(&g, &approx(), Mode::Approx, &RandomStream::new(1, 1), &UnboundedOptions::default()).unwrap();
    let m = reconstruct_all(&rel, &g.topology()).unwrap();
    assert!(m.get(0, 3).is_infinite() && m.get(4, 2).is_infinite());
    assert!(m.get(0, 2).is_finite() && m.get(3, 4).is_finite());
    assert!(m.is_symmetric());
}

#[test]
fn release_round_trips_bit_for_bit() {
    let g = generate(&GraphKind::Grid { rows: 7, cols: 7 }, &WeightLaw::Uniform { a: 0.0, b: 3.0 }, &RandomStream::new(2, GRAPH_STREAM)).unwrap();
    for (mode, b) in [(Mode::Approx, approx()), (Mode::Pure, PrivacyBudget::pure(0.5).unwrap())] {
        let rel = release_unbounded(&g, &b, mode, &RandomStream::new(4, MECHANISM_STREAM), &UnboundedOptions::default()).unwrap();
        let text = serde_json::to_string(&rel).unwrap();
        let back: UnboundedRelease = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rel);
        let t = g.topology();
        let (a, c) = (reconstruct_all(&rel, &t).unwrap(), reconstruct_all(&back, &t).unwrap());
        for u in 0..g.n() {
            for v in 0..g.n() {
                assert_eq!(a.get(u, v).to_bits(), c.get(u, v).to_bits());
                if u < 5 {
                    assert_eq!(reconstruct_pair(&back, &t, u, v).unwrap().to_bits(), a.get(u, v).to_bits());
                }
            }
        }
    }
}

#[test]
fn reconstruction_rejects_a_foreign_topology() {
    let g = path(10);
    let rel = release_unbounded(&g, &approx(), Mode::Approx, &RandomStream::new(0, 0), &UnboundedOptions::default()).unwrap();
    let other = Topology::new(10, (1..10).map(|i| (0, i)).collect()).unwrap();
    assert!(reconstruct_all(&rel, &other).is_err());
    assert!(reconstruct_pair(&rel, &g.topology(), 0, 10).is_err());
}
