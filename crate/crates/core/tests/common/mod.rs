//! Reference computations written directly from the definitions, sharing no
//! code with the library beyond reading pool rows.

#![allow(dead_code)]

use dksel::{EmbeddingMatrix, SelectParams};
use rand::Rng;

pub fn w(pool: &EmbeddingMatrix, i: usize, j: usize) -> f64 {
    pool.row(i)
        .iter()
        .zip(pool.row(j))
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum()
}

/// `E^T x` by a plain loop.
pub fn etx(pool: &EmbeddingMatrix, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; pool.dim()];
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (a, &e) in v.iter_mut().zip(pool.row(i)) {
                *a += xi * e as f64;
            }
        }
    }
    v
}

pub fn objective(pool: &EmbeddingMatrix, c: &[f64], x: &[f64], p: &SelectParams) -> f64 {
    let k = p.k as f64;
    let lin: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    let xx: f64 = x.iter().map(|a| a * a).sum();
    let vv: f64 = etx(pool, x).iter().map(|a| a * a).sum();
    p.theta * (k - 1.0) * lin + (1.0 - p.theta) * (p.lambda * xx - vv)
}

/// Objective of a 0/1 point from pairwise similarities.
pub fn vertex_objective(pool: &EmbeddingMatrix, c: &[f64], s: &[usize], p: &SelectParams) -> f64 {
    let k = p.k as f64;
    let lin: f64 = s.iter().map(|&i| c[i]).sum();
    let mut quad = 0.0;
    for &i in s {
        for &j in s {
            quad += w(pool, i, j);
        }
    }
    p.theta * (k - 1.0) * lin + (1.0 - p.theta) * (p.lambda * s.len() as f64 - quad)
}

pub fn gradient(pool: &EmbeddingMatrix, c: &[f64], x: &[f64], p: &SelectParams) -> Vec<f64> {
    let k = p.k as f64;
    let n = pool.len();
    (0..n)
        .map(|i| {
            let wx: f64 = (0..n).map(|j| w(pool, i, j) * x[j]).sum();
            p.theta * (k - 1.0) * c[i] + 2.0 * (1.0 - p.theta) * (p.lambda * x[i] - wx)
        })
        .collect()
}

pub fn indicator(n: usize, s: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &i in s {
        x[i] = 1.0;
    }
    x
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// `min_{i in S} g_i - max_{j not in S} g_j` at the indicator of `s`.
pub fn gradient_gap(pool: &EmbeddingMatrix, c: &[f64], s: &[usize], p: &SelectParams) -> (f64, f64) {
    let n = pool.len();
    let g = gradient(pool, c, &indicator(n, s), p);
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let min_in = s.iter().map(|&i| g[i]).fold(f64::INFINITY, f64::min);
    let max_out = (0..n)
        .filter(|i| !s.contains(i))
        .map(|j| g[j])
        .fold(f64::NEG_INFINITY, f64::max);
    (min_in - max_out, scale)
}

/// Best vertex by exhaustive search; strictly larger values replace the incumbent.
pub fn brute_force(pool: &EmbeddingMatrix, c: &[f64], p: &SelectParams) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for s in subsets(pool.len(), p.k) {
        let f = vertex_objective(pool, c, &s, p);
        if f > best.1 {
            best = (s, f);
        }
    }
    best
}

/// Rows with dyadic entries whose squares sum to exactly 1, so stored `f32`
/// rows are exactly unit-norm. Rejects exactly anti-aligned pairs.
pub fn dyadic_pool<R: Rng>(rng: &mut R, n: usize, d: usize) -> EmbeddingMatrix {
    assert!(d >= 16);
    // (count of +-1/2 entries, count of +-1/4 entries)
    const PATTERNS: [(usize, usize); 4] = [(4, 0), (3, 4), (2, 8), (0, 16)];
    loop {
        let rows: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                let (halves, quarters) = PATTERNS[rng.random_range(0..PATTERNS.len())];
                let mut coords: Vec<usize> = (0..d).collect();
                for i in 0..halves + quarters {
                    let j = rng.random_range(i..d);
                    coords.swap(i, j);
                }
                let mut row = vec![0.0f32; d];
                for (t, &ci) in coords[..halves + quarters].iter().enumerate() {
                    let mag = if t < halves { 0.5 } else { 0.25 };
                    row[ci] = if rng.random_bool(0.5) { mag } else { -mag };
                }
                row
            })
            .collect();
        let pool = EmbeddingMatrix::from_rows(rows).unwrap();
        let ok = (0..n).all(|i| (i + 1..n).all(|j| w(&pool, i, j) > -1.0 + 1e-9));
        if ok {
            return pool;
        }
    }
}
