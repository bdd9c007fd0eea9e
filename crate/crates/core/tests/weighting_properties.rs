use crof_core::label_weighting::{
    compute_weights, max_trusted_rank, normalize_weights, rank_original, weigh_sample, Scenario,
    WeightParams, SIMPLEX_TOL,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = WeightParams> {
    (0.01f64..0.99, 0.01f64..0.99, 0.01f64..0.99)
        .prop_map(|(a, b, g)| WeightParams::new(a, b, g).unwrap())
}

/// Logits with deliberate ties: values from a coarse grid mixed with
/// continuous draws.
fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![(-4i32..4).prop_map(|v| v as f64 * 0.5), -60.0f64..60.0],
        2..50,
    )
}

fn case() -> impl Strategy<Value = (Vec<f64>, usize, usize, WeightParams)> {
    (logits(), 1usize..=10, params())
        .prop_flat_map(|(z, k, p)| {
            let n = z.len();
            (Just(z), 0..n, Just(k), Just(p))
        })
}

/// Raw weights at rank `r` of a sample with well separated logits.
fn in_topk_weights(r: usize, k: usize, p: &WeightParams) -> Vec<f64> {
    let n = k.max(r) + 1;
    let z: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
    let rs = rank_original(&z, r - 1, k).unwrap();
    assert_eq!(rs.rank(), r);
    compute_weights(&rs, p).unwrap().w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn weights_lie_on_the_simplex((z, original, k, p) in case()) {
        let (_, wv) = weigh_sample(&z, original, k, &p).unwrap();
        let w_star = wv.w_star.as_ref().unwrap();
        prop_assert!((wv.w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        prop_assert!((w_star.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        for (&w, &ws) in wv.w.iter().zip(w_star) {
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!((0.0..=1.0).contains(&ws));
            prop_assert_eq!(w == 0.0, ws == 0.0);
        }
    }

    #[test]
    fn shifting_logits_changes_nothing((z, original, k, p) in case(), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (rs_a, a) = weigh_sample(&z, original, k, &p).unwrap();
        let (rs_b, b) = weigh_sample(&shifted, original, k, &p).unwrap();
        prop_assert_eq!(rs_a.order(), rs_b.order());
        prop_assert_eq!(&a.candidates, &b.candidates);
        for (x, y) in a.w.iter().zip(&b.w) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        for (x, y) in a.w_star.unwrap().iter().zip(&b.w_star.unwrap()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn candidates_follow_the_scenario((z, original, k, p) in case()) {
        let rs = rank_original(&z, original, k).unwrap();
        let wv = compute_weights(&rs, &p).unwrap();
        prop_assert_eq!(&wv.candidates[..], &rs.order()[..rs.k()]);
        let has_original = wv.candidates.contains(&original);
        match rs.scenario() {
            Scenario::OneHot => prop_assert_eq!(wv.w[0], 1.0),
            Scenario::InTopK => prop_assert!(has_original),
            Scenario::OutsideTopK => prop_assert!(!has_original),
        }
    }

    #[test]
    fn equal_logits_make_normalization_a_no_op(
        n in 2usize..20, c in -5.0f64..5.0, k in 1usize..10, p in params(), seed in 0usize..100,
    ) {
        let z = vec![c; n];
        let rs = rank_original(&z, seed % n, k).unwrap();
        let wv = normalize_weights(&compute_weights(&rs, &p).unwrap(), &rs).unwrap();
        for (w, ws) in wv.w.iter().zip(wv.w_star.as_ref().unwrap()) {
            prop_assert!((w - ws).abs() <= 1e-12);
        }
    }

    #[test]
    fn loyalty_weight_decreases_with_rank(p in params(), k in 3usize..10) {
        let mut prev = f64::INFINITY;
        for r in 2..=k {
            let w = in_topk_weights(r, k, &p);
            prop_assert!(w[r - 1] < prev);
            prev = w[r - 1];
        }
    }

    #[test]
    fn trusted_rank_matches_brute_force(p in params()) {
        let r_max = max_trusted_rank(&p).unwrap();
        for r in 2..=20 {
            let w = in_topk_weights(r, 20, &p);
            prop_assert_eq!(w[r - 1] > w[0], r <= r_max, "r = {}, r_max = {}", r, r_max);
        }
    }
}
