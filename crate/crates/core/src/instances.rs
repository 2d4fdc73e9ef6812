//! Random problem instances for tests and experiments.
//!
//! Every generator rejects pools containing a pair with cosine similarity
//! below `-0.999`, so generated instances are never anti-aligned.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::EmbeddingMatrix;

/// Pairs more anti-aligned than this are resampled.
pub const ANTI_ALIGNMENT_FLOOR: f64 = -1.0 + 1e-6;

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalized(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// True when no two distinct rows are (nearly) perfectly anti-aligned.
pub fn satisfies_anti_alignment(pool: &EmbeddingMatrix) -> bool {
    let n = pool.len();
    (0..n).all(|i| (i + 1..n).all(|j| pool.similarity(i, j) > ANTI_ALIGNMENT_FLOOR))
}

fn resample_until_aligned<R: Rng + ?Sized>(
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> EmbeddingMatrix,
) -> EmbeddingMatrix {
    loop {
        let pool = draw(rng);
        if pool.len() > 2000 || satisfies_anti_alignment(&pool) {
            return pool;
        }
    }
}

/// `n` isotropic unit vectors in `R^d`.
pub fn random_pool<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> EmbeddingMatrix {
    resample_until_aligned(rng, |rng| {
        let rows = (0..n).map(|_| normalized(&gaussian_vec(rng, d))).collect();
        EmbeddingMatrix::from_rows(rows).expect("gaussian rows are nonzero")
    })
}

/// `n` unit vectors around `clusters` random centroids with angular spread
/// `spread` (0 gives exact duplicates).
pub fn clustered_pool<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    d: usize,
    clusters: usize,
    spread: f64,
) -> EmbeddingMatrix {
    resample_until_aligned(rng, |rng| {
        let centroids: Vec<Vec<f64>> = (0..clusters.max(1))
            .map(|_| {
                let g = gaussian_vec(rng, d);
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                g.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        let rows = (0..n)
            .map(|i| {
                let c = &centroids[i % centroids.len()];
                let noise = gaussian_vec(rng, d);
                let scale = spread / (d as f64).sqrt();
                let v: Vec<f64> = c.iter().zip(&noise).map(|(a, b)| a + scale * b).collect();
                normalized(&v)
            })
            .collect();
        EmbeddingMatrix::from_rows(rows).expect("perturbed centroids are nonzero")
    })
}

/// Relevance against a random unit query.
pub fn random_relevance<R: Rng + ?Sized>(rng: &mut R, pool: &EmbeddingMatrix) -> Vec<f64> {
    let q = normalized(&gaussian_vec(rng, pool.dim()));
    crate::model::relevance_from_query(pool, &q).expect("query has pool dimension")
}

/// A random fractional point of `{0 <= x <= 1, sum x = k}`: a convex
/// combination of a few random `k`-subset indicators.
pub fn random_feasible<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<f64> {
    let parts = rng.random_range(2..=4usize);
    let weights: Vec<f64> = (0..parts).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut x = vec![0.0; n];
    for w in weights {
        idx.shuffle(rng);
        for &i in &idx[..k] {
            x[i] += w / total;
        }
    }
    x
}

/// A random `k`-subset indicator.
pub fn random_vertex<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn feasible_points_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.random_range(2..30);
            let k = rng.random_range(1..=n);
            let x = random_feasible(&mut rng, n, k);
            let s = crate::model::SelectionVector::new(x, k);
            assert!(s.is_ok());
        }
    }

    #[test]
    fn clustered_pool_is_clustered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = clustered_pool(&mut rng, 20, 16, 4, 0.1);
        assert!(p.similarity(0, 4) > 0.95);
        assert!(satisfies_anti_alignment(&p));
    }
}
