//! Inverted-list partitioning with spherical k-means centroids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::dot_row;

pub(crate) const REFINEMENT_ITERATIONS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Partitions {
    /// `len() * dim` unit-normalized centroids.
    pub centroids: Vec<f32>,
    /// Row indices per partition, ascending. Every row appears exactly once.
    pub members: Vec<Vec<u32>>,
}

impl Partitions {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    fn centroid(&self, p: usize, dim: usize) -> &[f32] {
        &self.centroids[p * dim..(p + 1) * dim]
    }

    /// Partition ids ordered by similarity to `q`, ties to the lower id.
    pub fn rank(&self, q: &[f64], dim: usize) -> Vec<usize> {
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .map(|p| (p, dot_row(q, self.centroid(p, dim))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.into_iter().map(|(p, _)| p).collect()
    }

    /// Seeded farthest-point initialization followed by a fixed number of
    /// Lloyd refinements under inner-product assignment.
    pub fn train(rows: &[f32], dim: usize, requested: usize, seed: u64) -> Self {
        let n = rows.len() / dim;
        let k = requested.clamp(1, n);
        let row = |i: usize| &rows[i * dim..(i + 1) * dim];

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = rng.random_range(0..n);
        let mut chosen = vec![first];
        let mut min_dist: Vec<f64> = (0..n).map(|i| distance(row(i), row(first))).collect();
        while chosen.len() < k {
            let mut best = 0;
            for i in 1..n {
                if min_dist[i] > min_dist[best] {
                    best = i;
                }
            }
            chosen.push(best);
            for (i, d) in min_dist.iter_mut().enumerate() {
                *d = d.min(distance(row(i), row(best)));
            }
        }
        let mut centroids: Vec<f32> = chosen.iter().flat_map(|&c| row(c).to_vec()).collect();

        for _ in 0..REFINEMENT_ITERATIONS {
            let assignment = assign(rows, dim, &centroids);
            let mut sums = vec![0.0f64; k * dim];
            let mut counts = vec![0usize; k];
            for (i, &p) in assignment.iter().enumerate() {
                counts[p] += 1;
                for (s, &x) in sums[p * dim..(p + 1) * dim].iter_mut().zip(row(i)) {
                    *s += x as f64;
                }
            }
            for p in 0..k {
                if counts[p] == 0 {
                    continue;
                }
                let sum = &sums[p * dim..(p + 1) * dim];
                let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for (c, s) in centroids[p * dim..(p + 1) * dim].iter_mut().zip(sum) {
                        *c = (s / norm) as f32;
                    }
                }
            }
        }

        let assignment = assign(rows, dim, &centroids);
        let mut members = vec![Vec::new(); k];
        for (i, &p) in assignment.iter().enumerate() {
            members[p].push(i as u32);
        }
        Self { centroids, members }
    }
}

fn distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn assign(rows: &[f32], dim: usize, centroids: &[f32]) -> Vec<usize> {
    let k = centroids.len() / dim;
    rows.par_chunks(dim)
        .map(|r| {
            let q: Vec<f64> = r.iter().map(|&x| x as f64).collect();
            let mut best = (0, f64::NEG_INFINITY);
            for p in 0..k {
                let s = dot_row(&q, &centroids[p * dim..(p + 1) * dim]);
                if s > best.1 {
                    best = (p, s);
                }
            }
            best.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.extend(v.iter().map(|x| (x / norm) as f32));
        }
        rows
    }

    #[test]
    fn membership_is_a_partition() {
        let rows = random_rows(1000, 8, 1);
        let parts = Partitions::train(&rows, 8, 16, 42);
        assert_eq!(parts.len(), 16);
        let mut all: Vec<u32> = parts.members.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<u32>>());
    }

    #[test]
    fn training_is_deterministic() {
        let rows = random_rows(300, 4, 2);
        assert_eq!(
            Partitions::train(&rows, 4, 8, 7),
            Partitions::train(&rows, 4, 8, 7)
        );
    }

    #[test]
    fn centroids_are_unit() {
        let rows = random_rows(200, 6, 3);
        let parts = Partitions::train(&rows, 6, 5, 0);
        for c in parts.centroids.chunks(6) {
            let n: f64 = c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }
}
