mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use reebflow::fastslow::{detect_stopping, SimConfig};
use reebflow::graph_process::{solve_backward_pde, PdeGridSpec};
use reebflow::harness::{ExperimentConfig, SignedHeight};
use reebflow::reeb::GraphPoint;
use reebflow::rng::{stream_id, tag};
use reebflow::stats::{ks_two_sample, scaling_fit, wilson, Z95, Z99};

use common::dumbbell;

fn graph_point() -> impl Strategy<Value = GraphPoint> {
    (0usize..3, 0.001f64..0.999).prop_map(|(k, u)| {
        let e = dumbbell().graph.edge(k);
        GraphPoint { k, h: e.h_lo + u * (e.h_hi - e.h_lo) }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn signed_height_is_injective(p in graph_point(), q in graph_point()) {
        let enc = SignedHeight::new(&dumbbell().graph);
        prop_assume!(p != q);
        prop_assert_ne!(enc.encode(p), enc.encode(q));
    }

    #[test]
    fn signed_height_keeps_order_along_an_edge(k in 0usize..3, u in 0.001f64..0.998, du in 1e-4f64..1e-3) {
        let e = dumbbell().graph.edge(k);
        let enc = SignedHeight::new(&dumbbell().graph);
        let h = |u: f64| e.h_lo + u * (e.h_hi - e.h_lo);
        let (a, b) = (enc.encode(GraphPoint { k, h: h(u) }), enc.encode(GraphPoint { k, h: h(u + du) }));
        prop_assert!(a != b);
    }

    #[test]
    fn ks_is_a_symmetric_distance(
        a in prop::collection::vec(-10.0f64..10.0, 100..400),
        b in prop::collection::vec(-10.0f64..10.0, 100..400),
    ) {
        let ab = ks_two_sample(&a, &b).unwrap();
        let ba = ks_two_sample(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.statistic));
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
    }

    #[test]
    fn wilson_intervals_bracket_the_estimate(n in 1usize..5000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let p = k as f64 / n as f64;
        let (lo95, hi95) = wilson(k, n, Z95);
        let (lo99, hi99) = wilson(k, n, Z99);
        prop_assert!(0.0 <= lo99 && lo99 <= lo95 && lo95 <= p + 1e-12);
        prop_assert!(p - 1e-12 <= hi95 && hi95 <= hi99 && hi99 <= 1.0);
    }

    #[test]
    fn alpha_outside_the_open_half_interval_is_rejected(alpha in -1.0f64..2.0) {
        let mut cfg = ExperimentConfig::default();
        cfg.run.sim.alpha = alpha;
        let ok = alpha > 0.0 && alpha < 0.5;
        prop_assert_eq!(cfg.validate().is_ok(), ok);
        prop_assert_eq!(SimConfig { alpha, ..SimConfig::default() }.validate().is_ok(), ok);
    }

    #[test]
    fn detector_alternates_on_random_walks(
        steps in prop::collection::vec(-0.01f64..0.01, 10..2000),
        h0 in 0.0f64..0.6,
    ) {
        let mut h = h0;
        let dense: Vec<(f64, f64)> = steps
            .iter()
            .enumerate()
            .map(|(i, d)| {
                h = (h + d).abs();
                (i as f64 * 1e-3, h)
            })
            .collect();
        let log = detect_stopping(&dense, 0.25, 0.4, 0.01).unwrap();
        prop_assert!(log.is_alternating());
    }

    #[test]
    fn scaling_fit_recovers_exponents(beta in -2.0f64..2.0, c in 0.01f64..100.0) {
        let xs = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(beta)).collect();
        let fit = scaling_fit(&xs, &ys, None, 7).unwrap();
        prop_assert!((fit.slope - beta).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn stream_ids_are_distinct(paths in prop::collection::hash_set(0u64..1 << 40, 1..100)) {
        let tags = [tag::FASTSLOW, tag::EXIT_PROBABILITY, tag::EXIT_TIME, tag::EXCURSIONS, tag::BOOTSTRAP];
        let ids: HashSet<u64> = tags.iter().flat_map(|&t| paths.iter().map(move |&p| stream_id(t, p))).collect();
        prop_assert_eq!(ids.len(), tags.len() * paths.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn backward_equation_preserves_constants(c in -5.0f64..5.0, t in 0.0f64..0.5) {
        let spec = PdeGridSpec { dx: 1e-2, dt: 1e-2, ..PdeGridSpec::default() };
        let f = move |_: GraphPoint| c;
        let sol = solve_backward_pde(&dumbbell().dynamics(), &f, t, &spec).unwrap();
        for (_, _, values) in &sol.edges {
            prop_assert!(values.iter().all(|v| (v - c).abs() < 1e-10 * (1.0 + c.abs())));
        }
    }
}
