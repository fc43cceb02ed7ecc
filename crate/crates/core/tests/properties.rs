mod common;

use common::*;
use projcc::estimators::{EstimatorConfig, Method};
use projcc::lut::{self, LutBounds, LutGrid};
use projcc::projective::{
    apap_weights, apply, fit_apap, fit_global, AlsConfig, ApapConfig, CorrectionMode,
    CorrectionSettings, Corrector,
};
use projcc::synth::{brute_force_global_fit, brute_force_weighted_fit, random_plant};
use projcc::{angular_error, to_chromaticity, Illuminant};
use proptest::prelude::*;
use rand::seq::SliceRandom;

const METHODS: [Method; 6] = [
    Method::GrayWorld,
    Method::MaxRgb,
    Method::ShadesOfGray,
    Method::GrayEdge1,
    Method::GrayEdge2,
    Method::PcaBrightDark,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimators_ignore_exposure(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let img = random_image(40, 30, &mut rng(seed));
        for m in METHODS {
            let cfg = EstimatorConfig::new(m);
            let a = cfg.estimate(&img).unwrap();
            let b = cfg.estimate(&img.scaled(alpha)).unwrap();
            prop_assert!(angular_error(&a, &b).unwrap().0 < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn estimators_are_rotation_invariant(seed in any::<u64>()) {
        let img = random_image(40, 30, &mut rng(seed));
        for m in METHODS {
            let cfg = EstimatorConfig::new(m);
            let a = cfg.estimate(&img).unwrap();
            let b = cfg.estimate(&img.rotated90()).unwrap();
            prop_assert!(angular_error(&a, &b).unwrap().0 < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn planted_transform_is_recovered(seed in any::<u64>(), n in 10usize..60, strength in 0.05f64..0.6) {
        let mut r = rng(seed);
        let plant = random_plant(seed, 0, strength, 100.0);
        let corpus = planted_corpus(&plant, n, 0.0, &mut r);
        let fit = fit_global(&corpus, &AlsConfig::default()).unwrap();
        let queries: Vec<Illuminant> = (0..100).map(|_| random_ray(&mut r)).collect();
        prop_assert!(worst_action_error(fit.transform.matrix(), plant.matrix(), corpus.estimates()) < 1e-6);
        prop_assert!(worst_action_error(fit.transform.matrix(), plant.matrix(), &queries) < 1e-6);
    }

    #[test]
    fn global_fit_ignores_pair_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let plant = random_plant(seed, 1, 0.4, 20.0);
        let corpus = planted_corpus(&plant, 30, 3.0, &mut r);
        let mut order: Vec<usize> = (0..30).collect();
        order.shuffle(&mut r);
        let a = fit_global(&corpus, &AlsConfig::default()).unwrap().transform;
        let b = fit_global(&corpus.permuted(&order), &AlsConfig::default()).unwrap().transform;
        let queries: Vec<Illuminant> = (0..20).map(|_| random_ray(&mut r)).collect();
        prop_assert!(worst_action_error(a.matrix(), b.matrix(), &queries) < 1e-9);
    }

    #[test]
    fn als_objective_never_increases(
        seed in any::<u64>(),
        noise in 0.0f64..8.0,
        extrapolate in any::<bool>(),
        refine in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let plant = random_plant(seed, 2, 0.5, 50.0);
        let corpus = planted_corpus(&plant, 25, noise, &mut r);
        let cfg = AlsConfig { extrapolate, refine, ..Default::default() };
        let fit = fit_global(&corpus, &cfg).unwrap();
        prop_assert_eq!(fit.objective.len(), fit.iterations + 1 + fit.refine_steps);
        for w in fit.objective.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn apap_weights_stay_in_range(seed in any::<u64>(), sigma in 0.5f64..10.0, gamma in 0.001f64..1.0) {
        let mut r = rng(seed);
        let corpus = planted_corpus(&random_plant(seed, 3, 0.3, 10.0), 20, 1.0, &mut r);
        let cfg = ApapConfig { sigma_w: sigma, gamma };
        let w = apap_weights(&random_ray(&mut r), &corpus, &cfg).unwrap();
        prop_assert!(w.iter().all(|&x| (gamma..=1.0).contains(&x)));
        let at_sample = apap_weights(&corpus.estimates()[0], &corpus, &cfg).unwrap();
        prop_assert_eq!(at_sample[0], 1.0);
    }

    #[test]
    fn unit_floor_reduces_to_global(seed in any::<u64>()) {
        let mut r = rng(seed);
        let corpus = planted_corpus(&random_plant(seed, 4, 0.4, 20.0), 30, 2.0, &mut r);
        let global = fit_global(&corpus, &AlsConfig::default()).unwrap().transform;
        let q = random_ray(&mut r);
        let flat = ApapConfig { gamma: 1.0, ..Default::default() };
        let local = fit_apap(&q, &corpus, &flat, &AlsConfig::default()).unwrap().transform;
        prop_assert!(worst_action_error(local.matrix(), global.matrix(), &[q]) < 1e-9);
    }

    #[test]
    fn correction_ignores_query_scale(seed in any::<u64>(), exponent in -30i32..30, alpha in 0.01f64..100.0) {
        let mut r = rng(seed);
        let corpus = planted_corpus(&random_plant(seed, 5, 0.3, 10.0), 20, 1.0, &mut r);
        let q = random_ray(&mut r);
        let exact = q.scaled(2f64.powi(exponent)).unwrap();
        let rounded = q.scaled(alpha).unwrap();
        let settings = CorrectionSettings { lut_size: 4, ..Default::default() };
        for mode in [CorrectionMode::Global, CorrectionMode::Apap, CorrectionMode::ApapLut] {
            let c = Corrector::train(&corpus, mode, &settings).unwrap();
            let base = c.correct(&q).unwrap();
            // Power-of-two scaling is exact in floating point.
            prop_assert_eq!(&c.correct(&exact).unwrap(), &base, "{:?}", mode);
            // Other factors round the query, which moves APAP by at most
            // the fit tolerance.
            let tol = if mode == CorrectionMode::Apap { 1e-6 } else { 1e-9 };
            let err = angular_error(&c.correct(&rounded).unwrap().illuminant, &base.illuminant).unwrap().0;
            prop_assert!(err < tol, "{:?}: {}", mode, err);
        }
        let flat = fit_apap(&q, &corpus, &ApapConfig::default(), &AlsConfig::default()).unwrap();
        prop_assert_eq!(fit_apap(&exact, &corpus, &ApapConfig::default(), &AlsConfig::default()).unwrap(), flat);
    }
}

#[test]
fn weighted_fit_matches_brute_force_oracle() {
    let mut r = rng(42);
    let corpus = planted_corpus(&random_plant(42, 0, 0.4, 20.0), 30, 3.0, &mut r);
    let apap = ApapConfig::default();
    let als = AlsConfig {
        threshold: 1e-12,
        max_iters: 1000,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = random_ray(&mut r);
        let fast = fit_apap(&q, &corpus, &apap, &als).unwrap().transform;
        let slow = brute_force_weighted_fit(&q, &corpus, &apap).unwrap();
        worst = worst.max(worst_action_error(fast.matrix(), slow.matrix(), &[q]));
    }
    assert!(worst < 1e-4, "worst disagreement {worst}°");
}

#[test]
fn global_fit_matches_brute_force_oracle() {
    let mut r = rng(43);
    let corpus = planted_corpus(&random_plant(43, 0, 0.4, 20.0), 40, 2.0, &mut r);
    let fast = fit_global(
        &corpus,
        &AlsConfig {
            threshold: 1e-12,
            max_iters: 1000,
            ..Default::default()
        },
    )
    .unwrap();
    let slow = brute_force_global_fit(&corpus).unwrap();
    let queries: Vec<Illuminant> = (0..100).map(|_| random_ray(&mut r)).collect();
    assert!(worst_action_error(fast.transform.matrix(), slow.matrix(), &queries) < 1e-4);
}

#[test]
fn lut_nodes_reproduce_exact_fits() {
    let mut r = rng(44);
    let corpus = planted_corpus(&random_plant(44, 0, 0.3, 10.0), 30, 1.0, &mut r);
    let (apap, als) = (ApapConfig::default(), AlsConfig::default());
    let grid = LutGrid::build(&corpus, 6, LutBounds::default(), &apap, &als).unwrap();
    let round_trip = lut::deserialize(&lut::serialize(&grid)).unwrap();
    assert_eq!(round_trip, grid);
    for (i, j) in [(1, 1), (2, 1), (1, 3)] {
        let c = grid.node_chromaticity(i, j);
        let q = projcc::from_chromaticity(&c);
        let exact = apply(&fit_apap(&q, &corpus, &apap, &als).unwrap().transform, &q)
            .unwrap()
            .illuminant;
        let fast = grid.query(&q).unwrap().illuminant;
        assert!(
            angular_error(&exact, &fast).unwrap().0 < 1e-9,
            "node ({i}, {j})"
        );
        let back = to_chromaticity(&q).unwrap();
        assert!((back.u1 - c.u1).abs() < 1e-12 && (back.u2 - c.u2).abs() < 1e-12);
    }
}

#[test]
fn lut_rejects_corruption() {
    let mut r = rng(45);
    let corpus = planted_corpus(&random_plant(45, 0, 0.3, 10.0), 20, 1.0, &mut r);
    let grid = LutGrid::build(
        &corpus,
        4,
        LutBounds::default(),
        &ApapConfig::default(),
        &AlsConfig::default(),
    )
    .unwrap();
    let bytes = lut::serialize(&grid);
    for pos in [0, 9, 70, bytes.len() / 2, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(lut::deserialize(&bad).is_err(), "flip at {pos} accepted");
    }
    assert!(lut::deserialize(&bytes[..bytes.len() - 5]).is_err());
}
