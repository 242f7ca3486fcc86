//! Oracles for the tokenisation plan on random point clouds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Check;
use crate::pga::{matvec3, quaternion_matrix, Vec3};
use crate::tokenizer::{build_plan, TokenizationPlan, TokenizerError, DEFAULT_EPSILON};

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerCheckOptions {
    pub clouds: usize,
    pub max_points: usize,
    pub ratio: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for TokenizerCheckOptions {
    fn default() -> Self {
        TokenizerCheckOptions { clouds: 50, max_points: 5000, ratio: 0.1, k: 3, seed: 0 }
    }
}

/// Nearest coarse point by exhaustive search; ties go to the earlier entry.
fn brute_assignment(positions: &[Vec3], coarse: &[usize]) -> Vec<usize> {
    positions
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (slot, &c) in coarse.iter().enumerate() {
                let q = positions[c];
                let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                if d < best.0 {
                    best = (d, slot);
                }
            }
            best.1
        })
        .collect()
}

fn same_structure(a: &TokenizationPlan, b: &TokenizationPlan) -> bool {
    a.coarse_indices == b.coarse_indices && a.assignment == b.assignment && a.interp_neighbors == b.interp_neighbors
}

fn max_weight_diff(a: &TokenizationPlan, b: &TokenizationPlan) -> f64 {
    a.interp_weights.iter().zip(&b.interp_weights).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Assignment against brute force, weight normalisation, exact translation
/// invariance on dyadic coordinates and invariance under random orthogonal
/// maps (structure exact, weights to 1e−12).
pub fn tokenizer_checks(opts: &TokenizerCheckOptions) -> Result<Vec<Check>, TokenizerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut assign_miss, mut translate_miss, mut rotate_miss) = (0, 0, 0);
    let (mut sum_dev, mut rotate_dev) = (0.0f64, 0.0f64);
    for cloud in 0..opts.clouds {
        let n = rng.random_range(opts.max_points.min(50)..=opts.max_points);
        // Multiples of 2^-20 in [-8, 8): squared distances need at most 51
        // bits, so translated clouds produce bit-identical distances.
        let dyadic = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(-(8i32 << 20)..(8 << 20))) / f64::from(1 << 20);
        let positions: Vec<Vec3> = (0..n).map(|_| std::array::from_fn(|_| dyadic(&mut rng))).collect();
        let seed = opts.seed.wrapping_add(cloud as u64);
        let plan = build_plan(&positions, opts.ratio, opts.k, seed, DEFAULT_EPSILON)?;

        assign_miss += usize::from(brute_assignment(&positions, &plan.coarse_indices) != plan.assignment);
        for w in plan.interp_weights.chunks_exact(plan.k) {
            sum_dev = sum_dev.max((w.iter().sum::<f64>() - 1.0).abs());
            if w.iter().any(|x| !x.is_finite()) {
                sum_dev = f64::INFINITY;
            }
        }

        let shift: Vec3 = std::array::from_fn(|_| dyadic(&mut rng));
        let moved: Vec<Vec3> = positions.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect();
        let shifted = build_plan(&moved, opts.ratio, opts.k, seed, DEFAULT_EPSILON)?;
        translate_miss += usize::from(shifted != plan);

        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut m = quaternion_matrix(q.map(|c| c / norm));
        if rng.random_bool(0.5) {
            m[0] = m[0].map(|c| -c);
        }
        let turned: Vec<Vec3> = positions.iter().map(|&p| matvec3(&m, p)).collect();
        let rotated = build_plan(&turned, opts.ratio, opts.k, seed, DEFAULT_EPSILON)?;
        if same_structure(&rotated, &plan) {
            rotate_dev = rotate_dev.max(max_weight_diff(&rotated, &plan));
        } else {
            rotate_miss += 1;
        }
    }
    Ok(vec![
        Check::exact("assignment_vs_brute_force", assign_miss),
        Check::new("weights_sum_to_one", sum_dev, 1e-12),
        Check::exact("translation_changes_plan", translate_miss),
        Check::exact("orthogonal_map_changes_structure", rotate_miss),
        Check::new("orthogonal_map_weight_deviation", rotate_dev, 1e-12),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let opts = TokenizerCheckOptions { clouds: 4, max_points: 400, ..Default::default() };
        for c in tokenizer_checks(&opts).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }
}
