mod common;

use loopshape::reduction::{
    balanced_reduce, error_bound, grid_hinf_error, hankel_singular_values, select_order,
    OrderSelection,
};
use loopshape::{RationalTf, TwoSidedFir};
use proptest::prelude::*;
use rand::Rng;

const FS: f64 = 1000.0;

fn fir_of(tf: &RationalTf, len: usize) -> TwoSidedFir {
    TwoSidedFir::from_sequence(&tf.impulse_response(len).unwrap()).unwrap()
}

fn strictly_proper<R: Rng>(rng: &mut R, order: usize, radius: f64) -> RationalTf {
    loop {
        let tf = common::random_stable_tf(rng, order, radius, FS);
        if tf.relative_order() >= 1 {
            return tf;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn singular_values_match_gramians(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let order = rng.random_range(1..=4usize);
        let tf = strictly_proper(&mut rng, order, 0.7);
        let (a, b, c) = common::companion(&tf);
        let want = common::gramian_hsv(&a, &b, &c);
        prop_assume!(want[order - 1] > 1e-6 * want[0]);
        let got = hankel_singular_values(&fir_of(&tf, 160)).unwrap();
        for k in 0..order {
            prop_assert!((got[k] - want[k]).abs() <= 1e-7 * want[0], "σ{} {} vs {}", k + 1, got[k], want[k]);
        }
        prop_assert!(got[order] <= 1e-8 * got[0]);
    }

    #[test]
    fn measured_error_is_within_the_bound(seed in any::<u64>(), r in 0usize..8) {
        let mut rng = common::rng(seed);
        let mut taps: Vec<f64> = (0..40).map(|k| rng.random_range(-1.0..1.0) * 0.9f64.powi(k)).collect();
        taps[0] = rng.random_range(-1.0..1.0);
        let fir = TwoSidedFir::new(taps, 0).unwrap();
        let red = balanced_reduce(&fir, OrderSelection::Order(r), FS).unwrap();
        prop_assert!(red.reduced.spectral_radius().unwrap() < 1.0);
        let e = grid_hinf_error(&fir, &red.reduced, 2048).unwrap();
        prop_assert!(e.max_abs <= red.error_bound * (1.0 + 1e-9) + 1e-12,
            "r = {}: {} > {}", red.order, e.max_abs, red.error_bound);
        prop_assert!(red.measured_grid_error <= red.error_bound * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn bound_and_order_are_monotone(
        mut sigma in prop::collection::vec(0.0f64..10.0, 1..30),
        e1 in 0.05f64..1.0,
        e2 in 0.05f64..1.0,
    ) {
        sigma.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sigma[0] > 0.0);
        for r in 1..=sigma.len() {
            prop_assert!(error_bound(&sigma, r) <= error_bound(&sigma, r - 1));
        }
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let rl = select_order(&sigma, OrderSelection::EnergyFraction(lo)).unwrap();
        let rh = select_order(&sigma, OrderSelection::EnergyFraction(hi)).unwrap();
        prop_assert!(rl <= rh);
        let kept: f64 = sigma[..rh].iter().sum();
        prop_assert!(kept >= hi * sigma.iter().sum::<f64>() * (1.0 - 1e-12));
    }
}

#[test]
fn rank_equals_order_for_a_rational_system() {
    let mut rng = common::rng(11);
    for order in 1..=5 {
        let tf = common::random_stable_tf(&mut rng, order, 0.6, FS);
        let fir = fir_of(&tf, 200);
        let s = hankel_singular_values(&fir).unwrap();
        assert!(s[order - 1] > 1e-9 * s[0], "order {order}");
        assert!(
            s[order] < 1e-10 * s[0],
            "order {order}: {:e}",
            s[order] / s[0]
        );

        let red = balanced_reduce(&fir, OrderSelection::Order(order), FS).unwrap();
        assert_eq!(red.order, order);
        assert_eq!(red.reduced.den_degree(), order);
        let h = red.reduced.impulse_response(50).unwrap();
        for k in 0..50 {
            assert!(
                (h.samples()[k] - fir.lag(k as i64)).abs() < 1e-8,
                "order {order} tap {k}"
            );
        }
    }
}

#[test]
fn requested_order_is_capped_at_rank() {
    let tf = RationalTf::new(vec![1.0], vec![1.0, -0.5], FS).unwrap();
    let red = balanced_reduce(&fir_of(&tf, 100), OrderSelection::Order(10), FS).unwrap();
    assert_eq!(red.order, 1);
    assert!(red.measured_grid_error < 1e-10);
}
