use proptest::prelude::*;

use num_rational::BigRational;
use snlab::diagnostics::{fit_models, radial_decompose, DefectMode, DefectProfile, DefectSample, Model};
use snlab::loop_minimizer::{discrete_length, init_loop};
use snlab::rational_approx::{convergents, pick_count, LatticeVector};
use snlab::rotational_oracle::RotationalOracle;
use snlab::stable_norm::{FlatSource, NormSource};
use snlab::{FourierSeries, MetricSpec, TangentSample, Vec2};

fn metrics() -> Vec<MetricSpec> {
    vec![
        MetricSpec::euclidean(),
        MetricSpec::flat([[2.0, 0.3], [0.3, 1.0]], [0.4, -0.2]),
        MetricSpec::standard_rotational(),
        MetricSpec::conformal(FourierSeries::two_dim(2.0, &[([1, 0], 0.3, 0.0), ([1, 1], 0.2, 0.4)])),
    ]
}

fn vec2() -> impl Strategy<Value = Vec2> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Vec2::new(a, b))
}

fn nonzero() -> impl Strategy<Value = Vec2> {
    vec2().prop_filter("nonzero", |v| v.norm() > 1e-2)
}

fn primitive() -> impl Strategy<Value = LatticeVector> {
    (-40i64..40, -40i64..40).prop_filter_map("primitive", |(a, b)| LatticeVector::new(a, b).ok().filter(|z| z.is_primitive()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finsler_homogeneity(x in vec2(), v in nonzero(), lambda in 0.01..50.0f64) {
        for m in metrics() {
            let f = m.eval_f(&TangentSample::new(x, v)).unwrap();
            let g = m.eval_f(&TangentSample::new(x, v * lambda)).unwrap();
            prop_assert!((g - lambda * f).abs() <= 1e-12 * g.abs().max(1.0));
        }
    }

    #[test]
    fn metrics_are_periodic(x in vec2(), v in nonzero(), k1 in -5i32..5, k2 in -5i32..5) {
        let shift = Vec2::new(k1 as f64, k2 as f64);
        for m in metrics() {
            let f = m.eval_f(&TangentSample::new(x, v)).unwrap();
            let g = m.eval_f(&TangentSample::new(x + shift, v)).unwrap();
            prop_assert!((f - g).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn euler_identity(x in vec2(), v in nonzero()) {
        for m in metrics() {
            let s = TangentSample::new(x, v);
            let (_, fv) = m.eval_df(&s).unwrap();
            let f = m.eval_f(&s).unwrap();
            prop_assert!((fv.dot(&v) - f).abs() <= 1e-12 * f.max(1.0));
        }
    }

    #[test]
    fn radial_decomposition(xi in nonzero(), v in vec2()) {
        let (along, across) = radial_decompose(xi, v).unwrap();
        let sum = along + across;
        prop_assert!((sum - (xi + v)).norm() <= 1e-12 * (1.0 + xi.norm() + v.norm()));
        prop_assert!(across.dot(&xi).abs() <= 1e-12 * (1.0 + xi.norm() * v.norm()));
        prop_assert!(along.perp(&xi).abs() <= 1e-12 * (1.0 + xi.norm() * v.norm()));
    }

    #[test]
    fn flat_source_is_a_norm(xi in nonzero(), eta in nonzero(), lambda in 0.01..20.0f64) {
        let m = MetricSpec::flat([[2.0, 0.3], [0.3, 1.0]], [0.4, -0.2]);
        let src = FlatSource::new(&m).unwrap();
        let s = |v: Vec2| src.sigma(v).unwrap().value;
        prop_assert!((s(xi * lambda) - lambda * s(xi)).abs() <= 1e-12 * lambda * s(xi));
        prop_assert!(s(xi + eta) <= s(xi) + s(eta) + 1e-12);
    }

    #[test]
    fn oracle_symmetries(a in -3.0..3.0f64, b in -3.0..3.0f64, lambda in 0.1..10.0f64) {
        prop_assume!(a.hypot(b) > 1e-2);
        let o = RotationalOracle::new(&FourierSeries::one_dim(2.0, &[(1, 1.0, 0.0)])).unwrap();
        let s = o.sigma(Vec2::new(a, b)).unwrap();
        for t in [Vec2::new(-a, b), Vec2::new(a, -b), Vec2::new(-a, -b)] {
            prop_assert!((o.sigma(t).unwrap() - s).abs() <= 1e-10 * s);
        }
        let scaled = o.sigma(Vec2::new(a, b) * lambda).unwrap();
        prop_assert!((scaled - lambda * s).abs() <= 1e-10 * scaled);
    }

    #[test]
    fn pick_count_is_norm_squared(z in primitive()) {
        prop_assert_eq!(pick_count(z).unwrap(), z.norm_sq() as u64);
    }

    #[test]
    fn complement_is_unimodular(z in primitive()) {
        let c = z.complement().unwrap();
        prop_assert_eq!((z.a() * c.b() - z.b() * c.a()).abs(), 1);
    }

    #[test]
    fn convergents_satisfy_the_bound(p in 1i64..10_000, q in 1i64..10_000) {
        let omega = BigRational::new(p.into(), q.into());
        let cs = convergents(&omega, 1000).unwrap();
        prop_assert!(cs.iter().all(|c| c.within_bound));
        prop_assert!(cs.windows(2).all(|w| w[1].q > w[0].q));
    }

    #[test]
    fn straight_loop_length_is_flat_norm(z in primitive(), ox in 0.0..1.0f64, oy in 0.0..1.0f64) {
        let m = MetricSpec::flat([[2.0, 0.3], [0.3, 1.0]], [0.4, -0.2]);
        let lp = init_loop(z, Vec2::new(ox, oy), 32).unwrap();
        let f = m.eval_f(&TangentSample::new(Vec2::zeros(), z.to_vec2())).unwrap();
        prop_assert!((discrete_length(&m, &lp).unwrap() - f).abs() <= 1e-12 * f);
    }

    #[test]
    fn fit_verdict_is_scale_invariant(c in 1e-3..1e3f64, lambda in 0.5..5.0f64, quadratic in any::<bool>()) {
        let samples = |scale: f64| -> Vec<DefectSample> {
            (0..8)
                .map(|i| {
                    let t = 0.2 * 0.5f64.powi(i);
                    let v = if quadratic { t * t } else { t * (-lambda / t).exp() };
                    DefectSample { t, value: scale * v, err: 1e-300, censored: false }
                })
                .collect()
        };
        let profile = |scale| DefectProfile {
            xi: Vec2::new(1.0, 0.0),
            direction: Vec2::new(0.0, 1.0),
            mode: DefectMode::Sigma,
            samples: samples(scale),
            uninformative: false,
        };
        let base = fit_models(&profile(1.0));
        let scaled = fit_models(&profile(c));
        prop_assert_eq!(base.model, scaled.model);
        prop_assert_eq!(base.model, if quadratic { Model::QuadraticPinch } else { Model::ExponentialFlat });
    }
}
