//! Exact k-nearest-neighbour queries. Ties are broken by the smaller
//! reference index, so brute force and grid search agree exactly.

use rayon::prelude::*;

use crate::pga::Vec3;

/// Point clouds at or above this size use the bucketed search.
pub const GRID_THRESHOLD: usize = 50_000;

#[inline]
pub fn dist_sq(a: Vec3, b: Vec3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

/// Sorted `(distance², index)` list of at most `k` entries.
#[derive(Debug, Clone)]
struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn new(k: usize) -> Self {
        Best { k, items: Vec::with_capacity(k + 1) }
    }

    fn offer(&mut self, d: f64, idx: usize) {
        if self.items.len() == self.k {
            let &(wd, wi) = self.items.last().expect("k >= 1");
            if (d, idx) >= (wd, wi) {
                return;
            }
        }
        let pos = self.items.partition_point(|&(bd, bi)| (bd, bi) < (d, idx));
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.k);
    }

    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    fn worst(&self) -> f64 {
        self.items.last().map_or(f64::INFINITY, |x| x.0)
    }
}

/// For each query, the `k` nearest references as `(index, distance²)` in
/// ascending order. Requires `1 <= k <= refs.len()`.
pub fn knn(queries: &[Vec3], refs: &[Vec3], k: usize) -> Vec<Vec<(usize, f64)>> {
    assert!(k >= 1 && k <= refs.len(), "k = {k} with {} references", refs.len());
    if queries.len().max(refs.len()) >= GRID_THRESHOLD {
        knn_grid(queries, refs, k)
    } else {
        knn_brute(queries, refs, k)
    }
}

pub fn knn_brute(queries: &[Vec3], refs: &[Vec3], k: usize) -> Vec<Vec<(usize, f64)>> {
    queries
        .par_iter()
        .map(|&q| {
            let mut best = Best::new(k);
            for (i, &r) in refs.iter().enumerate() {
                best.offer(dist_sq(q, r), i);
            }
            best.items.into_iter().map(|(d, i)| (i, d)).collect()
        })
        .collect()
}

/// Uniform-grid search expanding Chebyshev rings of cells until no unseen
/// cell can hold a closer (or equally close) point.
pub fn knn_grid(queries: &[Vec3], refs: &[Vec3], k: usize) -> Vec<Vec<(usize, f64)>> {
    let grid = Grid::new(refs);
    queries.par_iter().map(|&q| grid.query(q, refs, k)).collect()
}

struct Grid {
    lo: Vec3,
    h: f64,
    dims: [usize; 3],
    /// Reference indices sorted by cell, ascending within each cell.
    order: Vec<usize>,
    starts: Vec<usize>,
}

impl Grid {
    fn new(refs: &[Vec3]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in refs {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent: Vec3 = std::array::from_fn(|a| (hi[a] - lo[a]).max(0.0));
        let volume = extent.iter().map(|e| e.max(1e-12)).product::<f64>();
        // About two references per cell.
        let mut h = (2.0 * volume / refs.len() as f64).cbrt();
        let max_extent = extent.iter().copied().fold(0.0, f64::max);
        if !(h > 0.0) || !h.is_finite() {
            h = max_extent.max(1.0);
        }
        h = h.max(max_extent / 1024.0).max(f64::MIN_POSITIVE);
        let dims: [usize; 3] = std::array::from_fn(|a| ((extent[a] / h).floor() as usize + 1).min(1 << 20));
        let mut grid = Grid { lo, h, dims, order: Vec::new(), starts: Vec::new() };
        let cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; cells + 1];
        let ids: Vec<usize> = refs.iter().map(|&p| grid.flat(grid.cell(p))).collect();
        for &c in &ids {
            counts[c + 1] += 1;
        }
        for c in 0..cells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; refs.len()];
        for (i, &c) in ids.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        grid.order = order;
        grid.starts = counts;
        grid
    }

    fn cell(&self, p: Vec3) -> [usize; 3] {
        std::array::from_fn(|a| {
            let c = ((p[a] - self.lo[a]) / self.h).floor();
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(self.dims[a] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    fn query(&self, q: Vec3, refs: &[Vec3], k: usize) -> Vec<(usize, f64)> {
        let centre = self.cell(q);
        // Gap between the query and the boundary of its own cell block,
        // accounting for queries that fall outside the grid.
        let outside: f64 = (0..3)
            .map(|a| {
                let lo = self.lo[a];
                let hi = self.lo[a] + self.dims[a] as f64 * self.h;
                (lo - q[a]).max(q[a] - hi).max(0.0)
            })
            .fold(0.0, f64::max);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1);
        let mut best = Best::new(k);
        for r in 0..=max_ring {
            self.visit_ring(centre, r, |i| best.offer(dist_sq(q, refs[i]), i));
            // Unvisited cells are at least `r·h` away from the query's cell;
            // half a cell of slack absorbs rounding in the cell lookup.
            let reach = (r as f64 - 0.5) * self.h - outside;
            if best.full() && reach > 0.0 && best.worst() < reach * reach {
                break;
            }
        }
        best.items.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn visit_ring(&self, c: [usize; 3], r: usize, mut f: impl FnMut(usize)) {
        let r = r as isize;
        let range = |a: usize| {
            let lo = (c[a] as isize - r).max(0);
            let hi = (c[a] as isize + r).min(self.dims[a] as isize - 1);
            lo..=hi
        };
        for x in range(0) {
            for y in range(1) {
                for z in range(2) {
                    let ring = (x - c[0] as isize).abs().max((y - c[1] as isize).abs()).max((z - c[2] as isize).abs());
                    if ring != r {
                        continue;
                    }
                    let id = self.flat([x as usize, y as usize, z as usize]);
                    for &i in &self.order[self.starts[id]..self.starts[id + 1]] {
                        f(i);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..5 {
            let n = 300 + 200 * trial;
            let refs: Vec<Vec3> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
            // Include queries outside the reference box and exact duplicates.
            let mut queries: Vec<Vec3> =
                (0..200).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
            queries.extend_from_slice(&refs[..20]);
            for k in [1, 3, 4] {
                assert_eq!(knn_grid(&queries, &refs, k), knn_brute(&queries, &refs, k));
            }
        }
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let refs = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let got = knn_brute(&[[0.0; 3]], &refs, 2);
        assert_eq!(got[0], vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(knn_grid(&[[0.0; 3]], &refs, 2), got);
    }

    #[test]
    fn degenerate_clouds() {
        let refs = vec![[2.0, 2.0, 2.0]; 7];
        assert_eq!(knn_grid(&[[0.0; 3]], &refs, 3), knn_brute(&[[0.0; 3]], &refs, 3));
        let line: Vec<Vec3> = (0..100).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert_eq!(knn_grid(&line, &line, 4), knn_brute(&line, &line, 4));
    }
}
