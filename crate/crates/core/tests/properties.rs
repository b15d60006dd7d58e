use proptest::prelude::*;

use anova_gp_core::anova::{admissible_candidates, index_order, term_value, AnchorPoint};
use anova_gp_core::experiment::{build_anova_gp, relative_error, summarize, ExperimentConfig, ProblemSpec};
use anova_gp_core::pca::{fit_pca, project, reconstruct};
use anova_gp_core::simulators::{analytic_bank, DiffusionProblem};
use anova_gp_core::{AnovaIndex, SimCache, Simulator};

fn index_strategy(m: usize, max_len: usize) -> impl Strategy<Value = AnovaIndex> {
    prop::collection::btree_set(0..m, 0..=max_len).prop_map(|s| AnovaIndex::new(s.into_iter().collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_order_is_total_and_size_first(a in index_strategy(8, 4), b in index_strategy(8, 4)) {
        let ab = index_order(&a, &b);
        prop_assert_eq!(ab, index_order(&b, &a).reverse());
        prop_assert_eq!(ab == std::cmp::Ordering::Equal, a == b);
        if a.order() < b.order() {
            prop_assert_eq!(ab, std::cmp::Ordering::Less);
        }
    }

    #[test]
    fn admissible_candidates_have_all_facets_selected(
        picks in prop::collection::btree_set((0usize..6, 0usize..6), 0..12),
    ) {
        let selected: Vec<AnovaIndex> = picks
            .into_iter()
            .filter(|(i, j)| i < j)
            .map(|(i, j)| AnovaIndex::new(vec![i, j]).unwrap())
            .collect();
        let cands = admissible_candidates(&selected, 6);
        for t in &cands {
            prop_assert_eq!(t.order(), 3);
            for f in t.facets() {
                prop_assert!(selected.contains(&f));
            }
        }
        // Brute force over all triples.
        let brute = (0..6)
            .flat_map(|i| (i + 1..6).flat_map(move |j| (j + 1..6).map(move |k| vec![i, j, k])))
            .map(|c| AnovaIndex::new(c).unwrap())
            .filter(|t| t.facets().all(|f| selected.contains(&f)))
            .count();
        prop_assert_eq!(cands.len(), brute);
        prop_assert!(cands.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pca_round_trip_is_exact_at_full_rank(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 3..10),
    ) {
        let fit = fit_pca(&rows, 1e-14).unwrap();
        let model = &fit.model;
        let scale = rows.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        for y in &rows {
            let back = reconstruct(model, &project(model, y).unwrap()).unwrap();
            for (a, b) in back.iter().zip(y) {
                prop_assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
            }
        }
        // Components stay orthonormal.
        for (i, u) in model.components.iter().enumerate() {
            for (j, v) in model.components.iter().enumerate() {
                let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn relative_error_is_scale_invariant(
        truth in prop::collection::vec(-3.0f64..3.0, 1..8),
        noise in prop::collection::vec(-1.0f64..1.0, 8),
        s in 1e-3f64..1e3,
    ) {
        prop_assume!(truth.iter().any(|v| v.abs() > 1e-3));
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t + n).collect();
        let e = relative_error(&pred, &truth).unwrap().unwrap();
        let scaled_pred: Vec<f64> = pred.iter().map(|v| v * s).collect();
        let scaled_truth: Vec<f64> = truth.iter().map(|v| v * s).collect();
        let es = relative_error(&scaled_pred, &scaled_truth).unwrap().unwrap();
        prop_assert!((e - es).abs() <= 1e-10 * e.max(1e-300));
        prop_assert_eq!(relative_error(&truth, &truth).unwrap(), Some(0.0));
    }

    #[test]
    fn summary_quantiles_are_ordered(errs in prop::collection::vec(prop::option::weighted(0.9, 0.0f64..10.0), 1..40)) {
        match summarize(&errs) {
            None => prop_assert!(errs.iter().all(Option::is_none)),
            Some(s) => {
                prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
                prop_assert_eq!(s.count + s.undefined, errs.len());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_norm_is_a_norm(seed_u in prop::collection::vec(-1.0f64..1.0, 25), seed_v in prop::collection::vec(-1.0f64..1.0, 25), a in -4.0f64..4.0) {
        let fem = DiffusionProblem::new(4, 1).unwrap();
        let n = fem.n_nodes();
        let u: Vec<f64> = (0..n).map(|i| seed_u[i % 25]).collect();
        let v: Vec<f64> = (0..n).map(|i| seed_v[i % 25] * (1.0 + i as f64 / n as f64)).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x + y).collect();
        let nu = fem.output_norm(&u);
        let nv = fem.output_norm(&v);
        prop_assert!(fem.output_norm(&w) <= nu + nv + 1e-12);
        let au: Vec<f64> = u.iter().map(|x| a * x).collect();
        prop_assert!((fem.output_norm(&au) - a.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
        prop_assert!(nu >= 0.0);
    }

    #[test]
    fn simulators_are_pure(xi in prop::collection::vec(0.01f64..1.0, 4)) {
        let fem = DiffusionProblem::new(8, 2).unwrap();
        prop_assert_eq!(fem.evaluate(&xi).unwrap(), fem.evaluate(&xi).unwrap());
        for name in ["additive", "rank-one-product", "polynomial-mix", "constant"] {
            let sim = analytic_bank(name, 4, 7).unwrap();
            prop_assert_eq!(sim.evaluate(&xi).unwrap(), sim.evaluate(&xi).unwrap());
        }
    }

    #[test]
    fn term_values_vanish_at_the_anchor(t in index_strategy(5, 3).prop_filter("non-empty", |t| !t.is_empty())) {
        let sim = analytic_bank("polynomial-mix", 5, 6).unwrap();
        let anchor = AnchorPoint::input_mean(&sim);
        let cache = SimCache::new();
        let at_anchor = t.project(anchor.as_slice());
        let v = term_value(&t, &at_anchor, &sim, &anchor, &cache).unwrap();
        prop_assert!(v.iter().all(|x| x.abs() < 1e-12), "{t}: {v:?}");
    }
}

fn analytic_config(name: &str, m: usize, d: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 11,
        problem: ProblemSpec::Analytic { name: name.into(), m, output_dim: d },
        ..ExperimentConfig::default()
    };
    cfg.training.n_train = 10;
    cfg.training.pool_size = 200;
    cfg
}

#[test]
fn interpolating_emulator_reproduces_the_anchor_output() {
    let mut cfg = analytic_config("polynomial-mix", 3, 10);
    // Near-interpolating: an exact zero floor is too ill-conditioned for
    // smooth one-dimensional terms.
    cfg.training.gp.jitter_floor = 1e-12;
    cfg.training.tol_pca = 1e-12;
    let sim = cfg.problem.build().unwrap();
    let cache = SimCache::new();
    let (dec, em) = build_anova_gp(sim.as_ref(), &cfg, &cache).unwrap();
    let c = dec.anchor.as_slice().to_vec();
    let truth = sim.evaluate(&c).unwrap();
    let pred = em.predict_mean(&c).unwrap();
    let err = relative_error(&pred, &truth).unwrap().unwrap();
    assert!(err < 1e-5, "relative error at the anchor {err}");
}

#[test]
fn additive_simulator_is_emulated_accurately() {
    let cfg = analytic_config("additive", 4, 12);
    let sim = cfg.problem.build().unwrap();
    let cache = SimCache::new();
    let (dec, em) = build_anova_gp(sim.as_ref(), &cfg, &cache).unwrap();
    assert_eq!(dec.selection.max_order(), 1);
    let mut errs = Vec::new();
    for k in 0..50 {
        let xi: Vec<f64> = (0..4).map(|i| ((k * 7 + i * 13) % 50) as f64 / 50.0 + 0.01).collect();
        let truth = sim.evaluate(&xi).unwrap();
        errs.push(relative_error(&em.predict_mean(&xi).unwrap(), &truth).unwrap());
    }
    let median = summarize(&errs).unwrap().median;
    assert!(median < 1e-4, "median relative error {median}");
}
