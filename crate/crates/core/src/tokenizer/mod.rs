//! Geometry-only tokenisation: farthest point sampling, nearest-centre
//! clusters, and inverse-squared-distance interpolation weights.

mod knn;
mod serialize;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::pga::Vec3;

pub use knn::{dist_sq, knn, knn_brute, knn_grid, GRID_THRESHOLD};
pub use serialize::{plan_from_bytes, plan_to_bytes};

/// Default `ε` in `λ = 1/(d² + ε)`, in squared mesh units.
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Coarse-to-fine ratio presets: surface, volume and cortical surface.
pub const RATIO_SURFACE: f64 = 0.1;
pub const RATIO_VOLUME: f64 = 0.01;
pub const RATIO_CORTEX: f64 = 0.024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TokenizerError {
    #[error("n_coarse = {n_coarse} is outside 1..={n}")]
    CoarseCount { n_coarse: usize, n: usize },
    #[error("ratio {0} is outside (0, 1]")]
    Ratio(f64),
    #[error("k = {k} exceeds the {n_coarse} coarse points")]
    TooManyNeighbors { k: usize, n_coarse: usize },
    #[error("k must be at least 1")]
    ZeroNeighbors,
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("coarse index {0} appears twice")]
    DuplicateCoarse(usize),
    #[error("index {index} out of range for {len} points")]
    Index { index: usize, len: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("non-finite position at vertex {0}")]
    NonFinite(usize),
    #[error("feature rows {rows} do not match {expected}")]
    Rows { rows: usize, expected: usize },
    #[error("malformed plan: {0}")]
    Format(String),
}

/// Everything needed to pool fine vertices into tokens and lift tokens back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizationPlan {
    pub n_fine: usize,
    /// Seed and resulting first vertex of farthest point sampling.
    pub seed: u64,
    pub start: usize,
    pub k: usize,
    pub epsilon: f64,
    /// Fine-vertex index of each coarse point.
    pub coarse_indices: Vec<usize>,
    /// Position in `coarse_indices` of each fine vertex's cluster.
    pub assignment: Vec<usize>,
    /// `n_fine × k` positions in `coarse_indices`, nearest first.
    pub interp_neighbors: Vec<usize>,
    /// `n_fine × k` weights, each row summing to one.
    pub interp_weights: Vec<f64>,
}

impl TokenizationPlan {
    pub fn n_coarse(&self) -> usize {
        self.coarse_indices.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_coarse()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Structural consistency; used after deserialisation.
    pub fn validate(&self) -> Result<(), TokenizerError> {
        let nc = self.n_coarse();
        if nc == 0 || nc > self.n_fine {
            return Err(TokenizerError::CoarseCount { n_coarse: nc, n: self.n_fine });
        }
        let mut seen = vec![false; self.n_fine];
        for &c in &self.coarse_indices {
            if c >= self.n_fine {
                return Err(TokenizerError::Index { index: c, len: self.n_fine });
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(TokenizerError::DuplicateCoarse(c));
            }
        }
        if self.assignment.len() != self.n_fine
            || self.interp_neighbors.len() != self.n_fine * self.k
            || self.interp_weights.len() != self.n_fine * self.k
        {
            return Err(TokenizerError::Format("table lengths disagree with n_fine and k".into()));
        }
        if let Some(&bad) = self.assignment.iter().chain(&self.interp_neighbors).find(|&&a| a >= nc) {
            return Err(TokenizerError::Index { index: bad, len: nc });
        }
        if let Some(empty) = self.cluster_sizes().iter().position(|&s| s == 0) {
            return Err(TokenizerError::EmptyCluster(empty));
        }
        Ok(())
    }
}

/// `max(1, round(ratio·n))`, capped at `n`.
pub fn coarse_count(n: usize, ratio: f64) -> Result<usize, TokenizerError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(TokenizerError::Ratio(ratio));
    }
    Ok(((ratio * n as f64).round() as usize).clamp(1, n.max(1)))
}

fn check_finite(positions: &[Vec3]) -> Result<(), TokenizerError> {
    match positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        Some(i) => Err(TokenizerError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Start vertex drawn from a ChaCha8 stream seeded with `seed`.
pub fn fps_start(n: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
}

/// Greedy max-min subset beginning at a seeded vertex.
pub fn farthest_point_sampling(positions: &[Vec3], n_coarse: usize, seed: u64) -> Result<Vec<usize>, TokenizerError> {
    let n = positions.len();
    if n_coarse == 0 || n_coarse > n {
        return Err(TokenizerError::CoarseCount { n_coarse, n });
    }
    farthest_point_sampling_from(positions, n_coarse, fps_start(n, seed))
}

/// Farthest point sampling from an explicit start vertex. Ties go to the
/// smallest vertex index.
pub fn farthest_point_sampling_from(
    positions: &[Vec3],
    n_coarse: usize,
    start: usize,
) -> Result<Vec<usize>, TokenizerError> {
    let n = positions.len();
    if n_coarse == 0 || n_coarse > n {
        return Err(TokenizerError::CoarseCount { n_coarse, n });
    }
    if start >= n {
        return Err(TokenizerError::Index { index: start, len: n });
    }
    check_finite(positions)?;
    let mut selected = Vec::with_capacity(n_coarse);
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = start;
    loop {
        selected.push(current);
        min_d[current] = -1.0;
        if selected.len() == n_coarse {
            return Ok(selected);
        }
        let c = positions[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, (d, &p)) in min_d.iter_mut().zip(positions).enumerate() {
            if *d >= 0.0 {
                *d = d.min(dist_sq(p, c));
            }
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
}

/// Nearest coarse point of every vertex, as a position in `coarse_indices`.
pub fn assign_clusters(positions: &[Vec3], coarse_indices: &[usize]) -> Result<Vec<usize>, TokenizerError> {
    let coarse = coarse_positions(positions, coarse_indices)?;
    Ok(knn(positions, &coarse, 1).into_iter().map(|row| row[0].0).collect())
}

fn coarse_positions(positions: &[Vec3], coarse_indices: &[usize]) -> Result<Vec<Vec3>, TokenizerError> {
    if coarse_indices.is_empty() {
        return Err(TokenizerError::CoarseCount { n_coarse: 0, n: positions.len() });
    }
    check_finite(positions)?;
    let mut seen = std::collections::HashSet::new();
    coarse_indices
        .iter()
        .map(|&c| {
            if c >= positions.len() {
                return Err(TokenizerError::Index { index: c, len: positions.len() });
            }
            if !seen.insert(c) {
                return Err(TokenizerError::DuplicateCoarse(c));
            }
            Ok(positions[c])
        })
        .collect()
}

/// The `k` nearest coarse points of each fine vertex and their normalised
/// inverse-squared-distance weights, both flattened row-major.
pub fn interp_plan(
    fine: &[Vec3],
    coarse: &[Vec3],
    k: usize,
    epsilon: f64,
) -> Result<(Vec<usize>, Vec<f64>), TokenizerError> {
    if k == 0 {
        return Err(TokenizerError::ZeroNeighbors);
    }
    if k > coarse.len() {
        return Err(TokenizerError::TooManyNeighbors { k, n_coarse: coarse.len() });
    }
    if !(epsilon > 0.0) {
        return Err(TokenizerError::Epsilon(epsilon));
    }
    check_finite(fine)?;
    check_finite(coarse)?;
    let mut neighbors = Vec::with_capacity(fine.len() * k);
    let mut weights = Vec::with_capacity(fine.len() * k);
    for row in knn(fine, coarse, k) {
        let lambdas: Vec<f64> = row.iter().map(|&(_, d)| 1.0 / (d + epsilon)).collect();
        let total: f64 = lambdas.iter().sum();
        for (&(i, _), l) in row.iter().zip(lambdas) {
            neighbors.push(i);
            weights.push(l / total);
        }
    }
    Ok((neighbors, weights))
}

/// Full plan for one mesh.
pub fn build_plan(
    positions: &[Vec3],
    ratio: f64,
    k: usize,
    seed: u64,
    epsilon: f64,
) -> Result<TokenizationPlan, TokenizerError> {
    let n = positions.len();
    let n_coarse = coarse_count(n, ratio)?;
    let start = if n == 0 { 0 } else { fps_start(n, seed) };
    let coarse_indices = farthest_point_sampling_from(positions, n_coarse, start)?;
    let assignment = assign_clusters(positions, &coarse_indices)?;
    let coarse = coarse_positions(positions, &coarse_indices)?;
    let (interp_neighbors, interp_weights) = interp_plan(positions, &coarse, k, epsilon)?;
    let plan = TokenizationPlan {
        n_fine: n,
        seed,
        start,
        k,
        epsilon,
        coarse_indices,
        assignment,
        interp_neighbors,
        interp_weights,
    };
    plan.validate()?;
    Ok(plan)
}

/// Per-cluster mean of `[n, ..]` rows, summed in vertex order.
pub fn mean_pool(messages: &Tensor, assignment: &[usize], n_coarse: usize) -> Result<Tensor, TokenizerError> {
    let n = messages.shape.first().copied().unwrap_or(0);
    if n != assignment.len() {
        return Err(TokenizerError::Rows { rows: n, expected: assignment.len() });
    }
    let row = messages.data.len() / n.max(1);
    let mut out = vec![0.0; n_coarse * row];
    let mut counts = vec![0usize; n_coarse];
    for (v, &p) in assignment.iter().enumerate() {
        if p >= n_coarse {
            return Err(TokenizerError::Index { index: p, len: n_coarse });
        }
        counts[p] += 1;
        for (o, x) in out[p * row..(p + 1) * row].iter_mut().zip(&messages.data[v * row..(v + 1) * row]) {
            *o += x;
        }
    }
    for (p, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(TokenizerError::EmptyCluster(p));
        }
        let inv = 1.0 / c as f64;
        out[p * row..(p + 1) * row].iter_mut().for_each(|o| *o *= inv);
    }
    let mut shape = messages.shape.clone();
    if shape.is_empty() {
        shape.push(n_coarse);
    } else {
        shape[0] = n_coarse;
    }
    Ok(Tensor { shape, data: out })
}

/// Convex combination of coarse rows for every fine vertex.
pub fn interpolate(coarse: &Tensor, plan: &TokenizationPlan) -> Result<Tensor, TokenizerError> {
    let nc = coarse.shape.first().copied().unwrap_or(0);
    if nc != plan.n_coarse() {
        return Err(TokenizerError::Rows { rows: nc, expected: plan.n_coarse() });
    }
    let row = coarse.data.len() / nc.max(1);
    let mut out = vec![0.0; plan.n_fine * row];
    for v in 0..plan.n_fine {
        let dst = &mut out[v * row..(v + 1) * row];
        for j in 0..plan.k {
            let p = plan.interp_neighbors[v * plan.k + j];
            let w = plan.interp_weights[v * plan.k + j];
            for (o, x) in dst.iter_mut().zip(&coarse.data[p * row..(p + 1) * row]) {
                *o += w * x;
            }
        }
    }
    let mut shape = coarse.shape.clone();
    shape[0] = plan.n_fine;
    Ok(Tensor { shape, data: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec3> {
        (0..n).map(|i| [i as f64, 0.0, 0.0]).collect()
    }

    #[test]
    fn fps_on_a_line() {
        assert_eq!(farthest_point_sampling_from(&line(10), 2, 0).unwrap(), vec![0, 9]);
        let mut all = farthest_point_sampling(&line(10), 10, 3).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(farthest_point_sampling(&line(3), 4, 0).is_err());
        assert!(farthest_point_sampling(&line(3), 0, 0).is_err());
    }

    #[test]
    fn fps_ties_prefer_smaller_index() {
        // From the middle both ends are equally far.
        assert_eq!(farthest_point_sampling_from(&line(5), 2, 2).unwrap(), vec![2, 0]);
    }

    #[test]
    fn clusters_on_a_line() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [9.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(assign_clusters(&pts, &[0, 3]).unwrap(), vec![0, 0, 1, 1]);
        assert!(matches!(assign_clusters(&pts, &[0, 0]), Err(TokenizerError::DuplicateCoarse(0))));
    }

    #[test]
    fn equidistant_weights() {
        let coarse = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (_, w) = interp_plan(&[[0.0; 3]], &coarse, 3, DEFAULT_EPSILON).unwrap();
        assert!(w.iter().all(|&x| x == 1.0 / 3.0 || (x - 1.0 / 3.0).abs() < 1e-16));
    }

    #[test]
    fn coincident_point_dominates() {
        let eps = 1e-8;
        let coarse = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (n, w) = interp_plan(&[[0.0; 3]], &coarse, 4, eps).unwrap();
        assert_eq!(n[0], 0);
        let expected = (1.0 / eps) / (1.0 / eps + 3.0 / (1.0 + eps));
        assert!((w[0] - expected).abs() < 1e-15);
        assert!(matches!(interp_plan(&[[0.0; 3]], &coarse, 5, eps), Err(TokenizerError::TooManyNeighbors { .. })));
    }

    #[test]
    fn coarse_count_presets() {
        assert_eq!(coarse_count(7000, RATIO_SURFACE).unwrap(), 700);
        assert_eq!(coarse_count(10, 0.01).unwrap(), 1);
        assert_eq!(coarse_count(5, 1.0).unwrap(), 5);
        assert!(coarse_count(5, 0.0).is_err());
        assert!(coarse_count(5, 1.5).is_err());
    }

    #[test]
    fn pooling_and_interpolation() {
        let msgs = Tensor::new(vec![4, 2], vec![1.0, 2.0, -1.0, -2.0, 5.0, 5.0, 3.0, 1.0]).unwrap();
        let pooled = mean_pool(&msgs, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(pooled.data, vec![0.0, 0.0, 4.0, 3.0]);
        assert!(matches!(mean_pool(&msgs, &[0, 0, 0, 0], 2), Err(TokenizerError::EmptyCluster(1))));

        let pts = line(20);
        let plan = build_plan(&pts, 0.25, 3, 7, DEFAULT_EPSILON).unwrap();
        let same = Tensor::new(vec![plan.n_coarse(), 1], vec![2.5; plan.n_coarse()]).unwrap();
        let lifted = interpolate(&same, &plan).unwrap();
        assert!(lifted.data.iter().all(|&x| (x - 2.5).abs() < 1e-14));
    }
}
