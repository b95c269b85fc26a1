use mlab::graph::{build_graph, jump_profile, TransitionGraph};
use mlab::landscape::{builtin_himmelblau2d, builtin_paper_f, find_critical_points, CriticalPointSet, Landscape1D};
use mlab::limit::{ctmc_generator, dtmc, estimate_all, mc_estimate_rates, single_jump_rate, RateConfig};
use mlab::noise::{lambda_scale, NoiseModel};
use mlab::par::Execution;
use mlab::rng::{stream, Purpose};
use mlab::sgd::{step2_with, step_with, truncate, truncate2, SgdConfig};
use proptest::prelude::*;
use rand::Rng;

/// Dyadic positions keep reflections and shifts exact.
const UNIT: f64 = 1.0 / 64.0;

fn positions() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..7).prop_flat_map(|n| proptest::collection::vec(4u32..80, 2 * n - 2)).prop_map(|gaps| {
        let mut xs = vec![0.0];
        for g in &gaps {
            xs.push(xs.last().unwrap() + *g as f64 * UNIT);
        }
        let mid = (xs.last().unwrap() / 2.0 / UNIT).round() * UNIT;
        let xs: Vec<f64> = xs.iter().map(|x| x - mid).collect();
        let minima = xs.iter().step_by(2).copied().collect();
        let saddles = xs.iter().skip(1).step_by(2).copied().collect();
        (minima, saddles)
    })
}

/// Never an integer multiple of `UNIT`, so `r / b` never sits on an integer.
fn threshold() -> impl Strategy<Value = f64> {
    (2u32..60).prop_map(|k| (k as f64 + 0.5) * UNIT)
}

fn set((minima, saddles): (Vec<f64>, Vec<f64>)) -> CriticalPointSet {
    let r = minima.iter().chain(&saddles).fold(0.0f64, |a, x| a.max(x.abs())) + 1.0;
    CriticalPointSet::from_positions(minima, saddles, r).unwrap()
}

fn graph(points: &CriticalPointSet, b: f64) -> TransitionGraph {
    build_graph(&jump_profile(points, b).unwrap(), points)
}

proptest! {
    #[test]
    fn lambda_is_monotone(e1 in 1e-6f64..0.05, ratio in 1.01f64..10.0, l in 1u32..4, alpha in 1.05f64..2.5) {
        let m = NoiseModel::pareto(alpha, 0.1);
        let e2 = (e1 * ratio).min(0.09);
        prop_assume!(e2 > e1);
        prop_assert!(lambda_scale(&m, l, e1).unwrap() < lambda_scale(&m, l, e2).unwrap());
        prop_assert!(lambda_scale(&m, l + 1, e1).unwrap() < lambda_scale(&m, l, e1).unwrap());
    }

    #[test]
    fn truncation(w in -1e6f64..1e6, c in 1e-3f64..10.0, v in proptest::array::uniform2(-1e3f64..1e3)) {
        let t = truncate(w, c);
        prop_assert!(t.abs() <= c);
        prop_assert_eq!(truncate(t, c), t);
        if w.abs() <= c {
            prop_assert_eq!(t, w);
        } else {
            prop_assert_eq!(t.signum(), w.signum());
        }
        let t2 = truncate2(v, c);
        prop_assert!(t2[0].hypot(t2[1]) <= c * (1.0 + 1e-15));
        // direction is kept
        prop_assert!((t2[0] * v[1] - t2[1] * v[0]).abs() <= 1e-9 * v[0].hypot(v[1]).max(1.0));
    }

    #[test]
    fn one_dimensional_steps_stay_inside(
        x in -1.6f64..=1.6, z in -1e4f64..1e4, eta in 1e-4f64..0.5, b in proptest::option::of(1e-3f64..5.0),
    ) {
        let land = builtin_paper_f();
        let cfg = SgdConfig::new(eta, b);
        let y = step_with(&land, &cfg, x, z).unwrap();
        prop_assert!(y.abs() <= land.radius());
        if let Some(b) = b {
            // the subtraction itself rounds
            prop_assert!((y - x).abs() <= b + 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn two_dimensional_steps_stay_inside(
        r in 0.0f64..1.0, phi in 0.0f64..std::f64::consts::TAU, z in proptest::array::uniform2(-1e4f64..1e4),
        eta in 1e-4f64..0.05, b in 0.1f64..3.0,
    ) {
        let land = builtin_himmelblau2d();
        let x = [land.radius * r * phi.cos(), land.radius * r * phi.sin()];
        let y = step2_with(&land, &SgdConfig::new(eta, Some(b)), x, z).unwrap();
        prop_assert!(y[0].hypot(y[1]) <= land.radius * (1.0 + 1e-12));
    }

    #[test]
    fn wide_clipping_is_no_clipping(x in -1.6f64..=1.6, z in -1e6f64..1e6, eta in 1e-4f64..0.5, extra in 0.0f64..10.0) {
        let land = builtin_paper_f();
        let b = 2.0 * land.radius() + extra;
        let clipped = step_with(&land, &SgdConfig::new(eta, Some(b)), x, z).unwrap();
        let free = step_with(&land, &SgdConfig::new(eta, None), x, z).unwrap();
        prop_assert_eq!(clipped.to_bits(), free.to_bits());
    }

    #[test]
    fn graph_is_reflection_invariant(pos in positions(), b in threshold()) {
        let p = set(pos);
        let n = p.n_min();
        let g = graph(&p, b);
        let h = graph(&p.reflected(), b);
        let mut mirrored: Vec<(usize, usize)> = g.edges.iter().map(|&(i, j)| (n - 1 - i, n - 1 - j)).collect();
        mirrored.sort();
        prop_assert_eq!(mirrored, h.edges);
        prop_assert_eq!(g.irreducible, h.irreducible);
        let ls: Vec<u32> = g.l_star.iter().rev().copied().collect();
        prop_assert_eq!(ls, h.l_star);
    }

    #[test]
    fn graph_is_translation_invariant(pos in positions(), b in threshold(), shift in -40i32..40) {
        let p = set(pos);
        let g = graph(&p, b);
        let h = graph(&p.translated(shift as f64 * UNIT), b);
        prop_assert_eq!(g.edges, h.edges);
        prop_assert_eq!(g.classes, h.classes);
    }

    #[test]
    fn classes_partition_the_nodes(pos in positions(), b in threshold()) {
        let p = set(pos);
        let g = graph(&p, b);
        let mut all: Vec<usize> = g.classes.iter().flat_map(|c| c.members.clone()).collect();
        all.sort();
        prop_assert_eq!(all, (0..g.n).collect::<Vec<_>>());
        prop_assert!(g.classes.iter().any(|c| c.absorbing));
        if g.symmetric {
            prop_assert!(g.irreducible);
        }
    }

    #[test]
    fn farther_fields_need_more_jumps(pos in positions(), b in threshold()) {
        let p = set(pos);
        let prof = jump_profile(&p, b).unwrap();
        let n = p.n_min();
        for i in 0..n {
            for j in i + 1..n - 1 {
                prop_assert!(prof.l[i][j] <= prof.l[i][j + 1]);
            }
            for j in 1..i {
                prop_assert!(prof.l[i][j] <= prof.l[i][j - 1]);
            }
            prop_assert_eq!(prof.l_star[i], (0..n).filter(|&j| j != i).map(|j| prof.l[i][j]).min().unwrap());
        }
    }

    #[test]
    fn single_jump_rate_scales(pos in positions(), b in threshold(), s in 0.1f64..10.0, alpha in 1.05f64..2.0) {
        let p = set(pos.clone());
        let scaled = CriticalPointSet::from_positions(
            pos.0.iter().map(|x| x * s).collect(),
            pos.1.iter().map(|x| x * s).collect(),
            p.radius() * s,
        ).unwrap();
        for i in 0..p.n_min() {
            let q = single_jump_rate(&p, i, b, alpha, 0.5);
            let qs = single_jump_rate(&scaled, i, b * s, alpha, 0.5);
            prop_assert!((qs - q * s.powf(-alpha)).abs() <= 1e-12 * q.max(1e-300));
        }
    }
}

#[test]
fn monte_carlo_rates_scale() {
    let alpha = 1.2;
    let noise = NoiseModel::pareto(alpha, 0.1);
    let cfg = RateConfig::default().with_samples(200_000);
    let mut q = Vec::new();
    for s in [1.0, 0.5] {
        let roots: Vec<f64> = [-0.8, -0.1, 0.5].iter().map(|x| x * s).collect();
        let land = Landscape1D::from_critical_points(&roots, 1.0, 1.2 * s).unwrap();
        let pts = find_critical_points(&land, 20_000, 1e-12).unwrap();
        let prof = jump_profile(&pts, 0.9 * s).unwrap();
        assert_eq!(prof.l_star, vec![1, 1]);
        q.push(mc_estimate_rates(&land, &pts, &prof, &noise, 0, &cfg, 3, Execution::Parallel).unwrap());
    }
    let factor = 0.5f64.powf(-alpha);
    let se = (q[1].q_se.powi(2) + (factor * q[0].q_se).powi(2)).sqrt();
    assert!((q[1].q - factor * q[0].q).abs() < 3.0 * se, "{} vs {}", q[1].q, factor * q[0].q);
}

fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = stream(1, Purpose::Test, 0);
    let land = builtin_paper_f();
    let poly = Landscape1D::from_critical_points(&[-1.0, -0.3, 0.2, 0.9], 2.0, 1.5).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = rng.random_range(-1.6..1.6);
        worst = worst.max(rel_err(land.grad(x), fd(|y| land.value(y), x, 1e-5)));
        let y = rng.random_range(-1.5..1.5);
        worst = worst.max(rel_err(poly.grad(y), fd(|t| poly.value(t), y, 1e-5)));
    }
    assert!(worst < 1e-5, "1-D worst relative error {worst}");

    let land = builtin_himmelblau2d();
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 1000 {
        let p: [f64; 2] = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
        if p[0].hypot(p[1]) > land.radius || land.near_nonsmooth(p, 1e-3) {
            continue;
        }
        let g = land.grad(p);
        let h = 1e-6;
        let gx = fd(|t| land.value([t, p[1]]), p[0], h);
        let gy = fd(|t| land.value([p[0], t]), p[1], h);
        let scale = g[0].hypot(g[1]).max(1.0);
        worst = worst.max(((g[0] - gx).hypot(g[1] - gy)) / scale);
        checked += 1;
    }
    assert!(worst < 1e-5, "2-D worst relative error {worst}");
}

fn paper_table(b: f64, samples: u64) -> (mlab::limit::RateTable, TransitionGraph) {
    let land = builtin_paper_f();
    let pts = find_critical_points(&land, 20_000, 1e-10).unwrap();
    let prof = jump_profile(&pts, b).unwrap();
    let noise = NoiseModel::pareto(1.2, 0.1);
    let cfg = RateConfig::default().with_samples(samples);
    let table = estimate_all(&land, &pts, &prof, &noise, &cfg, 9, Execution::Parallel).unwrap();
    (table, build_graph(&prof, &pts))
}

#[test]
fn jump_chain_is_stochastic() {
    for b in [0.5, 0.4] {
        let (table, _) = paper_table(b, 50_000);
        let p = dtmc(&table).unwrap();
        for (i, row) in p.p.iter().enumerate() {
            assert_eq!(row[i], 0.0);
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "b = {b}, row {i}");
        }
    }
}

#[test]
fn limiting_chain_conserves_mass() {
    for b in [0.5, 0.4] {
        let (table, graph) = paper_table(b, 100_000);
        let p = dtmc(&table).unwrap();
        for c in 0..graph.classes.len() {
            let m = ctmc_generator(&table, &p, &graph, c).unwrap();
            for (a, &i) in m.states.iter().enumerate() {
                let fr = &table.fields[i];
                let total: f64 = m.kernel[a].iter().sum();
                assert!((total - fr.q).abs() <= 3.0 * fr.q_se + 1e-12 * fr.q, "b = {b} state {i}: {total} vs {}", fr.q);
                let gen: f64 = m.generator[a].iter().sum();
                assert!(gen.abs() <= 1e-9 * fr.q);
            }
            for (_, law) in &m.pi {
                assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
