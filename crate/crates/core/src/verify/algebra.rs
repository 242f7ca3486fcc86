//! Algebra exactness, embedding roundtrips and the convex-combination
//! property of point extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Check;
use crate::pga::blade::{blade_from_name, BLADE_NAMES, DIM, E0, E1, E2, E3};
use crate::pga::{
    cayley, embed, embed_point, extract_point, geometric_product, grade1_to_direction, GeometricObject, Multivector,
    Vec3, Versor,
};

fn generators(blade: usize) -> Vec<u8> {
    match BLADE_NAMES[blade] {
        "s" => Vec::new(),
        name => name[1..].bytes().map(|b| b - b'0').collect(),
    }
}

/// Basis product from generator lists: concatenate, bubble sort (each swap
/// flips the sign), then contract equal neighbours with `e0² = 0`, `ei² = 1`.
fn oracle_blades(a: usize, b: usize) -> (usize, f64) {
    let mut list = generators(a);
    list.extend(generators(b));
    let mut sign = 1.0;
    for i in 0..list.len() {
        for j in 0..list.len().saturating_sub(i + 1) {
            if list[j] > list[j + 1] {
                list.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    let mut out: Vec<u8> = Vec::new();
    for g in list {
        if out.last() == Some(&g) {
            out.pop();
            if g == 0 {
                sign = 0.0;
            }
        } else {
            out.push(g);
        }
    }
    let name = if out.is_empty() {
        "s".to_string()
    } else {
        format!("e{}", out.iter().map(|g| g.to_string()).collect::<String>())
    };
    (blade_from_name(&name).expect("sorted generators name a blade"), sign)
}

/// Geometric product computed blade by blade with the list-sorting rule,
/// independent of the multiplication table.
pub fn oracle_product(a: &Multivector, b: &Multivector) -> Multivector {
    let mut out = Multivector::ZERO;
    for i in 0..DIM {
        for j in 0..DIM {
            let (k, s) = oracle_blades(i, j);
            out[k] += s * a[i] * b[j];
        }
    }
    out
}

fn random_mv<R: Rng>(rng: &mut R) -> Multivector {
    Multivector(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Table against the oracle on every basis pair, the generator axioms,
/// associativity on all 16³ basis triples, and the product of `pairs`
/// random multivectors against the oracle (relative to the largest
/// coefficient).
pub fn algebra_checks(pairs: usize, seed: u64) -> Vec<Check> {
    let table = cayley();
    let basis = |i: usize| Multivector::basis(i);
    let mut table_misses = 0;
    for i in 0..DIM {
        for j in 0..DIM {
            let entry = table.get(i, j);
            let (blade, sign) = oracle_blades(i, j);
            let agree =
                if sign == 0.0 { entry.sign == 0 } else { entry.blade == blade && f64::from(entry.sign) == sign };
            table_misses += usize::from(!agree);
        }
    }

    let gens = [E0, E1, E2, E3];
    let mut axiom_misses = usize::from(geometric_product(&basis(E0), &basis(E0)) != Multivector::ZERO);
    for &g in &gens[1..] {
        axiom_misses += usize::from(geometric_product(&basis(g), &basis(g)) != Multivector::scalar(1.0));
    }
    for (n, &a) in gens.iter().enumerate() {
        for &b in &gens[n + 1..] {
            let ab = geometric_product(&basis(a), &basis(b));
            let ba = geometric_product(&basis(b), &basis(a));
            axiom_misses += usize::from(ab != -ba);
        }
    }

    let mut assoc_misses = 0;
    for i in 0..DIM {
        for j in 0..DIM {
            let ij = geometric_product(&basis(i), &basis(j));
            for k in 0..DIM {
                let left = geometric_product(&ij, &basis(k));
                let right = geometric_product(&basis(i), &geometric_product(&basis(j), &basis(k)));
                assoc_misses += usize::from(left != right);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (a, b) = (random_mv(&mut rng), random_mv(&mut rng));
        let expected = oracle_product(&a, &b);
        let scale = expected.max_abs().max(f64::MIN_POSITIVE);
        worst = worst.max(max_abs_diff(geometric_product(&a, &b).coeffs(), expected.coeffs()) / scale);
    }

    vec![
        Check::exact("table_matches_sign_rule", table_misses),
        Check::exact("generator_axioms", axiom_misses),
        Check::exact("associativity_basis_triples", assoc_misses),
        Check::new(format!("product_vs_oracle_{pairs}_pairs"), worst, 1e-14),
    ]
}

/// Point embed/extract roundtrips (1e−12), plane normals through the
/// grade-1 readout (1e−12) and translators acting as vector addition (1e−10).
pub fn embedding_checks(samples: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand3 = |r: f64| -> Vec3 { std::array::from_fn(|_| rng.random_range(-r..r)) };
    let (mut point, mut plane, mut shift) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..samples {
        let p = rand3(100.0);
        match extract_point(&embed_point(p)) {
            Ok(q) => point = point.max(max_abs_diff(&p, &q)),
            Err(_) => failures += 1,
        }
        let normal = rand3(1.0);
        let offset = rand3(10.0)[0];
        match embed(&GeometricObject::Plane { normal, offset }) {
            Ok(x) => {
                plane = plane.max(max_abs_diff(&grade1_to_direction(&x), &normal));
                plane = plane.max((x[E0] - offset).abs());
            }
            Err(_) => failures += 1,
        }
        let t = rand3(10.0);
        let moved = Versor::translator(t).apply(&embed_point(p)).and_then(|x| extract_point(&x));
        match moved {
            Ok(q) => shift = shift.max(max_abs_diff(&q, &[p[0] + t[0], p[1] + t[1], p[2] + t[2]])),
            Err(_) => failures += 1,
        }
    }
    vec![
        Check::new("point_roundtrip", point, 1e-12),
        Check::new("plane_roundtrip", plane, 1e-12),
        Check::new("translator_is_vector_addition", shift, 1e-10),
        Check::exact("embedding_errors", failures),
    ]
}

/// For random convex combinations `w = Σ ω_i x^i` of 2 to 6 weighted points
/// with `x123 ∈ (0, 10]`: the extracted point equals `Σ ω′_i t(x^i)` with
/// `ω′_i = ω_i x^i_123 / Σ_j ω_j x^j_123` (1e−10), and `ω′` is a convex
/// weight vector (positive, summing to one within 1e−12), which certifies
/// hull membership.
pub fn convex_combination_checks(combinations: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut identity, mut total) = (0.0f64, 0.0f64);
    let mut non_positive = 0;
    for _ in 0..combinations {
        let m = rng.random_range(2..=6);
        let pts: Vec<(Vec3, f64)> = (0..m)
            .map(|_| {
                let p: Vec3 = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
                // (0, 10]
                let w = 10.0 * (1.0 - rng.random::<f64>());
                (p, w)
            })
            .collect();
        let raw: Vec<f64> = (0..m).map(|_| 1.0 - rng.random::<f64>()).collect();
        let raw_sum: f64 = raw.iter().sum();
        let omega: Vec<f64> = raw.iter().map(|r| r / raw_sum).collect();

        let mut w = Multivector::ZERO;
        for ((p, weight), o) in pts.iter().zip(&omega) {
            w += embed_point(*p) * (weight * o);
        }
        let denom: f64 = pts.iter().zip(&omega).map(|((_, x123), o)| o * x123).sum();
        let omega_prime: Vec<f64> = pts.iter().zip(&omega).map(|((_, x123), o)| o * x123 / denom).collect();
        non_positive += omega_prime.iter().filter(|&&o| o <= 0.0).count();
        total = total.max((omega_prime.iter().sum::<f64>() - 1.0).abs());
        let mut expected = [0.0; 3];
        for ((p, _), o) in pts.iter().zip(&omega_prime) {
            for a in 0..3 {
                expected[a] += o * p[a];
            }
        }
        match extract_point(&w) {
            Ok(q) => identity = identity.max(max_abs_diff(&q, &expected)),
            Err(_) => identity = f64::INFINITY,
        }
    }
    vec![
        Check::new("extraction_equals_reweighted_combination", identity, 1e-10),
        Check::new("reweighted_sum_is_one", total, 1e-12),
        Check::exact("reweighted_non_positive", non_positive),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        let e = |n: &str| blade_from_name(n).unwrap();
        assert_eq!(oracle_blades(e("e1"), e("e2")), (e("e12"), 1.0));
        assert_eq!(oracle_blades(e("e2"), e("e1")), (e("e12"), -1.0));
        assert_eq!(oracle_blades(e("e12"), e("e12")), (e("s"), -1.0));
        assert_eq!(oracle_blades(e("e01"), e("e0")).1, 0.0);
    }

    #[test]
    fn suites_pass() {
        for c in
            algebra_checks(50, 1).into_iter().chain(embedding_checks(50, 1)).chain(convex_combination_checks(50, 1))
        {
            assert!(c.passed(), "{c:?}");
        }
    }
}
