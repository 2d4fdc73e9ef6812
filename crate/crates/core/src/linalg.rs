//! Dense kernels over row-major `f32` storage with `f64` accumulation.
//!
//! Every dot product uses the same fixed four-lane accumulation order, so a
//! given row always produces the same bits whether rows are processed
//! sequentially or split across worker threads.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::model::EmbeddingMatrix;

const LANES: usize = 4;

/// Rows per rayon task when the matrix-vector product runs in parallel.
const PAR_CHUNK_ROWS: usize = 2048;

/// Worker count from `DKSEL_THREADS`; absent or unparsable means 1.
pub fn threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        std::env::var("DKSEL_THREADS")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok())
            .filter(|&t| t >= 1)
            .unwrap_or(1)
    })
}

fn thread_pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        let t = threads();
        if t <= 1 {
            return None;
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()
    })
    .as_ref()
}

/// Runs `f` inside the shared worker pool, or inline when single-threaded.
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_pool() {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

#[inline]
pub fn dot_f32_f64(a: &[f32], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x as f64 * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x as f64 * *y as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq_f64(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `out[i] = <row_i, v>` for every row: one pass over the whole matrix.
pub fn matvec_into(pool: &EmbeddingMatrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), pool.dim());
    debug_assert_eq!(out.len(), pool.len());
    let d = pool.dim();
    let data = pool.as_flat();
    if threads() > 1 {
        install(|| {
            out.par_chunks_mut(PAR_CHUNK_ROWS)
                .enumerate()
                .for_each(|(chunk, o)| {
                    let start = chunk * PAR_CHUNK_ROWS;
                    for (r, slot) in o.iter_mut().enumerate() {
                        let i = start + r;
                        *slot = dot_f32_f64(&data[i * d..(i + 1) * d], v);
                    }
                });
        });
    } else {
        for (row, slot) in data.chunks_exact(d).zip(out.iter_mut()) {
            *slot = dot_f32_f64(row, v);
        }
    }
}

pub fn matvec(pool: &EmbeddingMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pool.len()];
    matvec_into(pool, v, &mut out);
    out
}

/// Similarity of one stored row against every row.
pub fn row_similarities_into(pool: &EmbeddingMatrix, row: usize, out: &mut [f64]) {
    let v: Vec<f64> = pool.row(row).iter().map(|&x| x as f64).collect();
    matvec_into(pool, &v, out);
}

/// `sum_i rows[i]` for the given row indices, accumulated in the given order.
pub fn gather_sum(pool: &EmbeddingMatrix, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; pool.dim()];
    for &i in rows {
        for (a, &e) in acc.iter_mut().zip(pool.row(i)) {
            *a += e as f64;
        }
    }
    acc
}

/// `E^T x`, visiting only the nonzero coordinates of `x` in index order.
pub fn transpose_times(pool: &EmbeddingMatrix, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), pool.len());
    let mut acc = vec![0.0; pool.dim()];
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (a, &e) in acc.iter_mut().zip(pool.row(i)) {
                *a += xi * e as f64;
            }
        }
    }
    acc
}
