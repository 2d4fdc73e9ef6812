//! The relaxed selection objective
//!
//! ```text
//! f(x) = theta (k-1) c^T x + (1-theta) (lambda ||x||^2 - ||E^T x||^2)
//! ```
//!
//! with its gradient, its exact quadratic slice along a direction, and the
//! single-swap expansion. Everything goes through `v = E^T x`; the Gram
//! matrix `E E^T` is never formed.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EmbeddingMatrix, SelectParams};

/// `f(x + g d) = base_value + g * delta + 0.5 * g^2 * curvature`, exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalQuadratic {
    pub delta: f64,
    pub curvature: f64,
    pub base_value: f64,
}

impl DirectionalQuadratic {
    pub fn value_at(&self, gamma: f64) -> f64 {
        self.base_value + gamma * self.delta + 0.5 * gamma * gamma * self.curvature
    }
}

/// Moves `step` units of mass from `leave` to `enter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapDirection {
    pub enter: usize,
    pub leave: usize,
    pub step: f64,
}

impl SwapDirection {
    pub fn is_feasible_at(&self, x: &[f64]) -> bool {
        self.enter != self.leave
            && self.enter < x.len()
            && self.leave < x.len()
            && self.step >= 0.0
            && x[self.enter] + self.step <= 1.0 + 1e-12
            && x[self.leave] - self.step >= -1e-12
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        y[self.enter] += self.step;
        y[self.leave] -= self.step;
        y
    }
}

/// How a direction is supplied to [`directional_quadratic`].
#[derive(Debug, Clone, Copy)]
pub enum Direction<'a> {
    /// Arbitrary dense direction; `E^T d` costs a pass over its support.
    Dense(&'a [f64]),
    /// `d = s - x` for the 0/1 vertex `s` with the given support; `E^T d` is
    /// gathered from `k` rows as `E^T s - v`.
    TowardVertex { vertex: &'a [usize], v: &'a [f64] },
}

/// Allowed `||v - E^T x||_inf` for a pool of dimension `d`.
pub fn cache_tolerance(d: usize) -> f64 {
    1e-5 * (d as f64).sqrt()
}

fn relevance_weight(params: &SelectParams) -> f64 {
    params.theta * (params.k as f64 - 1.0)
}

fn diversity_weight(params: &SelectParams) -> f64 {
    1.0 - params.theta
}

/// `f(x)` given a cache `v = E^T x`. Costs `O(n + d)`.
pub fn objective_from_cache(c: &[f64], x: &[f64], v: &[f64], params: &SelectParams) -> f64 {
    relevance_weight(params) * linalg::dot_f64(c, x)
        + diversity_weight(params)
            * (params.lambda * linalg::norm_sq_f64(x) - linalg::norm_sq_f64(v))
}

pub fn eval_objective(pool: &EmbeddingMatrix, c: &[f64], x: &[f64], params: &SelectParams) -> f64 {
    let v = linalg::transpose_times(pool, x);
    objective_from_cache(c, x, &v, params)
}

/// Writes `theta (k-1) c + 2 (1-theta) (lambda x - E v)` into `out`.
pub(crate) fn gradient_into(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &[f64],
    v: &[f64],
    params: &SelectParams,
    out: &mut [f64],
) {
    let a = relevance_weight(params);
    let b = 2.0 * diversity_weight(params);
    if b == 0.0 {
        for (o, &ci) in out.iter_mut().zip(c) {
            *o = a * ci;
        }
        return;
    }
    linalg::matvec_into(pool, v, out);
    for ((o, &ci), &xi) in out.iter_mut().zip(c).zip(x) {
        *o = a * ci + b * (params.lambda * xi - *o);
    }
}

/// Gradient at `x` using the cached `v`; fails with `StaleCache` when `v`
/// has drifted from `E^T x`.
pub fn eval_gradient(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &[f64],
    v: &[f64],
    params: &SelectParams,
) -> Result<Vec<f64>> {
    check_lengths(pool, c, x)?;
    if v.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            found: v.len(),
        });
    }
    let drift = cache_drift(pool, x, v);
    let tolerance = cache_tolerance(pool.dim());
    if drift > tolerance {
        return Err(Error::StaleCache { drift, tolerance });
    }
    let mut g = vec![0.0; pool.len()];
    gradient_into(pool, c, x, v, params, &mut g);
    Ok(g)
}

/// `||v - E^T x||_inf`.
pub fn cache_drift(pool: &EmbeddingMatrix, x: &[f64], v: &[f64]) -> f64 {
    linalg::transpose_times(pool, x)
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn check_lengths(pool: &EmbeddingMatrix, c: &[f64], x: &[f64]) -> Result<()> {
    for len in [c.len(), x.len()] {
        if len != pool.len() {
            return Err(Error::DimensionMismatch {
                expected: pool.len(),
                found: len,
            });
        }
    }
    Ok(())
}

/// The exact quadratic slice of `f` through `x` along `direction`.
pub fn directional_quadratic(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &[f64],
    grad: &[f64],
    direction: Direction<'_>,
    params: &SelectParams,
) -> DirectionalQuadratic {
    match direction {
        Direction::Dense(d) => {
            let etd = linalg::transpose_times(pool, d);
            let delta = linalg::dot_f64(grad, d);
            let curvature = curvature(params, linalg::norm_sq_f64(d), linalg::norm_sq_f64(&etd));
            DirectionalQuadratic {
                delta,
                curvature,
                base_value: eval_objective(pool, c, x, params),
            }
        }
        Direction::TowardVertex { vertex, v } => {
            let etd = sparse_etd(pool, vertex, v);
            let (delta, d_norm_sq) = vertex_step_terms(grad, x, vertex);
            DirectionalQuadratic {
                delta,
                curvature: curvature(params, d_norm_sq, linalg::norm_sq_f64(&etd)),
                base_value: objective_from_cache(c, x, v, params),
            }
        }
    }
}

/// `2 (1-theta) (lambda ||d||^2 - ||E^T d||^2)`.
#[inline]
pub(crate) fn curvature(params: &SelectParams, d_norm_sq: f64, etd_norm_sq: f64) -> f64 {
    2.0 * diversity_weight(params) * (params.lambda * d_norm_sq - etd_norm_sq)
}

/// `E^T s - v` for the 0/1 vertex `s`, in `O(kd)`.
pub fn sparse_etd(pool: &EmbeddingMatrix, vertex: &[usize], v: &[f64]) -> Vec<f64> {
    let mut etd = linalg::gather_sum(pool, vertex);
    for (a, b) in etd.iter_mut().zip(v) {
        *a -= b;
    }
    etd
}

/// `(<grad, s - x>, ||s - x||^2)` for the vertex `s` with sorted-or-not
/// support `vertex`.
pub(crate) fn vertex_step_terms(grad: &[f64], x: &[f64], vertex: &[usize]) -> (f64, f64) {
    let mut gs = 0.0;
    let mut d_norm_sq = 0.0;
    let mut x_in_s_sq = 0.0;
    for &i in vertex {
        gs += grad[i];
        let r = 1.0 - x[i];
        d_norm_sq += r * r;
        x_in_s_sq += x[i] * x[i];
    }
    d_norm_sq += linalg::norm_sq_f64(x) - x_in_s_sq;
    (gs - linalg::dot_f64(grad, x), d_norm_sq)
}

/// `2 (1-theta) (lambda - 1 + w_ij)`: curvature gain of a unit swap.
pub fn swap_gain(pool: &EmbeddingMatrix, i: usize, j: usize, params: &SelectParams) -> f64 {
    2.0 * diversity_weight(params) * (params.lambda - 1.0 + pool.similarity(i, j))
}

/// Both sides of the single-swap expansion at `x`:
/// `lhs = f(x + step d) - f(x)` evaluated directly and
/// `rhs = step * (g_enter - g_leave) + step^2 * 2 (1-theta) (lambda - 1 + w)`.
pub fn swap_taylor_check(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &[f64],
    swap: SwapDirection,
    params: &SelectParams,
) -> Result<(f64, f64)> {
    check_lengths(pool, c, x)?;
    if !swap.is_feasible_at(x) {
        return Err(Error::InfeasibleSwap {
            enter: swap.enter,
            leave: swap.leave,
            step: swap.step,
        });
    }
    let v = linalg::transpose_times(pool, x);
    let base = objective_from_cache(c, x, &v, params);
    let moved = eval_objective(pool, c, &swap.apply(x), params);
    let mut g = vec![0.0; pool.len()];
    gradient_into(pool, c, x, &v, params, &mut g);
    let delta = g[swap.enter] - g[swap.leave];
    let rhs = swap.step * delta + swap.step * swap.step * swap_gain(pool, swap.enter, swap.leave, params);
    Ok((moved - base, rhs))
}
