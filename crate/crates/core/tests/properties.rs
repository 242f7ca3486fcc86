use labgatr_core::autodiff::Tensor;
use labgatr_core::pga::{geometric_product, inv_norm_sq, Multivector, RigidMotion, Vec3};
use labgatr_core::tokenizer::{build_plan, interpolate, mean_pool, DEFAULT_EPSILON};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn multivector() -> impl Strategy<Value = Multivector> {
    prop::collection::vec(-2.0f64..2.0, 16).prop_map(|v| Multivector::from_slice(&v).unwrap())
}

fn motion() -> impl Strategy<Value = RigidMotion> {
    (any::<u64>(), any::<bool>())
        .prop_map(|(seed, reflections)| RigidMotion::random(&mut ChaCha8Rng::seed_from_u64(seed), reflections))
}

fn cloud(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 40..max)
}

fn max_dev(a: &Multivector, b: &Multivector) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn product_is_associative(a in multivector(), b in multivector(), c in multivector()) {
        let left = geometric_product(&geometric_product(&a, &b), &c);
        let right = geometric_product(&a, &geometric_product(&b, &c));
        prop_assert!(max_dev(&left, &right) <= 1e-12 * (1.0 + left.max_abs()));
    }

    #[test]
    fn versor_action_is_an_automorphism(g in motion(), a in multivector(), b in multivector()) {
        let lhs = g.apply_mv(&geometric_product(&a, &b));
        let rhs = geometric_product(&g.apply_mv(&a), &g.apply_mv(&b));
        prop_assert!(max_dev(&lhs, &rhs) <= 1e-9 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn invariant_norm_is_preserved(g in motion(), x in multivector()) {
        let (before, after) = (inv_norm_sq(&x), inv_norm_sq(&g.apply_mv(&x)));
        prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before));
    }

    #[test]
    fn interpolated_points_stay_in_the_hull(points in cloud(300), seed in 0u64..1000, k in 3usize..=4) {
        let plan = build_plan(&points, 0.2, k, seed, DEFAULT_EPSILON).unwrap();
        let coarse: Vec<f64> = plan.coarse_indices.iter().flat_map(|&i| points[i]).collect();
        let coarse = Tensor::new(vec![plan.n_coarse(), 3], coarse).unwrap();
        let fine = interpolate(&coarse, &plan).unwrap();
        for v in 0..plan.n_fine {
            let ws = &plan.interp_weights[v * k..(v + 1) * k];
            prop_assert!(ws.iter().all(|&w| w >= 0.0));
            for axis in 0..3 {
                let vals = plan.interp_neighbors[v * k..(v + 1) * k].iter().map(|&p| coarse.data[p * 3 + axis]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
                let x = fine.data[v * 3 + axis];
                prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn mean_pool_matches_a_serial_oracle(points in cloud(200), seed in 0u64..1000, row in 1usize..20) {
        let plan = build_plan(&points, 0.25, 3, seed, DEFAULT_EPSILON).unwrap();
        let n = points.len();
        let data: Vec<f64> = (0..n * row).map(|i| ((i * 7919) % 1013) as f64 / 97.0 - 5.0).collect();
        let pooled = mean_pool(&Tensor::new(vec![n, row], data.clone()).unwrap(), &plan.assignment, plan.n_coarse()).unwrap();
        for p in 0..plan.n_coarse() {
            let members: Vec<usize> = (0..n).filter(|&v| plan.assignment[v] == p).collect();
            for c in 0..row {
                let mut sum = 0.0;
                for &v in &members {
                    sum += data[v * row + c];
                }
                let expected = sum * (1.0 / members.len() as f64);
                prop_assert_eq!(pooled.data[p * row + c].to_bits(), expected.to_bits());
            }
        }
    }
}
