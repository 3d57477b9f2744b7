use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::{oracle, random_pair};
use tgrnet::metrics::{
    aggregate, confusion, confusion_curve, dilate_cross, erode_cross, evaluate_map, extract_boundary, f_beta, mae,
    GrayMap, BETA2,
};

#[test]
fn per_image_metrics_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (pred, gt) = random_pair(&mut rng, 16);
        let o = oracle(&pred, &gt);
        let e = evaluate_map(&pred, &gt).unwrap();
        assert!((e.mae - o.mae).abs() <= 1e-12);
        let curve = e.pr_curve.as_ref().unwrap();
        for k in 0..256 {
            assert!((curve[k].precision - o.precision[k]).abs() <= 1e-12, "k={k}");
            assert!((curve[k].recall - o.recall[k]).abs() <= 1e-12, "k={k}");
        }
        assert!((e.f_beta_max().unwrap() - o.f_max).abs() <= 1e-12);
        assert!((e.f_beta_adaptive.unwrap() - o.f_adaptive).abs() <= 1e-12);
    }
}

#[test]
fn dataset_aggregate_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pairs: Vec<_> = (0..100).map(|_| random_pair(&mut rng, 16)).collect();
    let evals: Vec<_> = pairs.iter().map(|(p, g)| evaluate_map(p, g).unwrap()).collect();
    let agg = aggregate(&evals).unwrap();
    let oracles: Vec<_> = pairs.iter().map(|(p, g)| oracle(p, g)).collect();
    let n = oracles.len() as f64;
    let mut f_max: f64 = 0.0;
    for k in 0..256 {
        let p = oracles.iter().map(|o| o.precision[k]).sum::<f64>() / n;
        let r = oracles.iter().map(|o| o.recall[k]).sum::<f64>() / n;
        f_max = f_max.max(1.3 * p * r / (0.3 * p + r));
    }
    let mae = oracles.iter().map(|o| o.mae).sum::<f64>() / n;
    let f_ad = oracles.iter().map(|o| o.f_adaptive).sum::<f64>() / n;
    assert!((agg.f_beta_max - f_max).abs() <= 1e-12);
    assert!((agg.mae - mae).abs() <= 1e-12);
    assert!((agg.f_beta_adaptive - f_ad).abs() <= 1e-12);
}

#[test]
fn boundary_of_square_is_its_two_pixel_ring() {
    let mask = GrayMap::from_fn(16, 16, |y, x| if (4..12).contains(&y) && (4..12).contains(&x) { 1.0 } else { 0.0 });
    let b = extract_boundary(&mask).unwrap();
    // Outer ring: 32 edge-adjacent pixels (corners excluded by the cross).
    // Inner ring: 28 pixels on the square's own edge.
    assert_eq!(b.foreground(), 32 + 28);
    assert_eq!(b.get(3, 3), 0.0);
    assert_eq!(b.get(3, 4), 1.0);
    assert_eq!(b.get(4, 4), 1.0);
    assert_eq!(b.get(5, 5), 0.0);
}

fn binary_map(n: usize) -> impl Strategy<Value = GrayMap> {
    prop::collection::vec(prop::bool::ANY, n * n)
        .prop_map(move |v| GrayMap::new(n, n, v.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
}

fn unit_map(n: usize) -> impl Strategy<Value = GrayMap> {
    prop::collection::vec(0.0f64..=1.0, n * n).prop_map(move |v| GrayMap::new(n, n, v).unwrap())
}

proptest! {
    #[test]
    fn mae_is_symmetric_and_complement_invariant(a in unit_map(6), b in binary_map(6)) {
        let ab = mae(&a, &b).unwrap();
        prop_assert!((ab - mae(&b, &a).unwrap()).abs() <= 1e-15);
        let ca = GrayMap::from_fn(6, 6, |y, x| 1.0 - a.get(y, x));
        let cb = GrayMap::from_fn(6, 6, |y, x| 1.0 - b.get(y, x));
        prop_assert!((ab - mae(&ca, &cb).unwrap()).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn counts_are_monotone_in_threshold(p in unit_map(7), g in binary_map(7)) {
        let curve = confusion_curve(&p, &g).unwrap();
        for k in 1..256 {
            prop_assert!(curve[k].tp <= curve[k - 1].tp);
            prop_assert!(curve[k].fp <= curve[k - 1].fp);
            prop_assert_eq!(curve[k].total(), 49);
            prop_assert_eq!(curve[k], confusion(&p, &g, k as f64 / 256.0).unwrap());
        }
    }

    #[test]
    fn boundary_lies_in_dilation_outside_erosion(m in binary_map(9)) {
        let b = extract_boundary(&m).unwrap();
        let d = dilate_cross(&m);
        let e = erode_cross(&m);
        for (i, &v) in b.data().iter().enumerate() {
            if v == 1.0 {
                prop_assert_eq!(d.data()[i], 1.0);
                prop_assert_eq!(e.data()[i], 0.0);
            }
        }
    }

    #[test]
    fn f_beta_of_equal_precision_and_recall_is_that_value(v in 0.0f64..=1.0) {
        prop_assert!((f_beta(v, v, BETA2) - v).abs() <= 1e-15);
    }
}
