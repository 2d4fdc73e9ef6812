//! Frank-Wolfe with exact line search over `{0 <= x <= 1, sum x = k}`.
//!
//! Each iteration costs one `n x d` matrix-vector product for the gradient,
//! an `O(n)` top-k selection for the linear maximization oracle, and an
//! `O(kd)` row gather for `E^T d`. The cache `v = E^T x` is updated
//! incrementally and rebuilt from scratch every `recompute_period`
//! iterations.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    EmbeddingMatrix, InitStrategy, SelectParams, SelectionVector, SolveReport, StopReason,
};
use crate::objective::{self, DirectionalQuadratic};

pub use crate::objective::sparse_etd;

/// Relative tolerance on a negative gap before it is treated as a bug.
const NEGATIVE_GAP_TOL: f64 = 1e-9;
/// Relative tolerance of the vertex certificate.
const CERT_TOL: f64 = 1e-7;

/// Value descending, then index ascending.
#[inline]
fn rank_order(a: (f64, u32), b: (f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Reusable scratch space for repeated top-k selection.
#[derive(Debug, Default)]
pub(crate) struct TopK {
    keyed: Vec<(f64, u32)>,
}

impl TopK {
    /// The `k` largest entries under the (value desc, index asc) order,
    /// returned in ascending index order.
    pub(crate) fn select(&mut self, values: &[f64], k: usize) -> Vec<usize> {
        let k = k.min(values.len());
        if k == 0 {
            return Vec::new();
        }
        self.keyed.clear();
        self.keyed
            .extend(values.iter().enumerate().map(|(i, &v)| (v, i as u32)));
        if k < self.keyed.len() {
            self.keyed.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        }
        let mut out: Vec<usize> = self.keyed[..k].iter().map(|&(_, i)| i as usize).collect();
        out.sort_unstable();
        out
    }
}

/// Indices of the `k` largest values, ascending by index. Ties go to the
/// lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    TopK::default().select(values, k)
}

/// Linear maximization oracle: support of the best `k`-subset vertex for
/// the linear function `grad`.
pub fn lmo_topk(grad: &[f64], k: usize) -> Vec<usize> {
    top_k_indices(grad, k)
}

/// Maximizer of the parabola `g -> delta g + C g^2 / 2` over `[0, 1]`.
pub fn exact_line_search(dq: &DirectionalQuadratic) -> Result<f64> {
    let scale = dq.base_value.abs().max(1.0);
    if dq.delta < -NEGATIVE_GAP_TOL * scale {
        return Err(Error::NegativeGap { delta: dq.delta });
    }
    if dq.curvature >= 0.0 {
        Ok(1.0)
    } else {
        Ok((dq.delta.max(0.0) / -dq.curvature).min(1.0))
    }
}

/// First-order classification of an integral point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCertificate {
    /// `min_{selected} grad_i - max_{unselected} grad_i`; `+inf` when every
    /// item is selected.
    pub grad_gap: f64,
    pub tolerance: f64,
    pub is_local_max: bool,
    /// Stationary with a zero gap: a unit swap between the tied pair strictly
    /// increases the objective.
    pub is_strict_saddle: bool,
    /// Unselected item with the largest gradient.
    pub entering: Option<usize>,
    /// Selected item with the smallest gradient.
    pub leaving: Option<usize>,
}

pub(crate) fn certificate_from_gradient(grad: &[f64], selected: &[bool]) -> VertexCertificate {
    let scale = grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let tolerance = CERT_TOL * scale;
    let mut min_in = (f64::INFINITY, None);
    let mut max_out = (f64::NEG_INFINITY, None);
    for (i, (&g, &s)) in grad.iter().zip(selected).enumerate() {
        if s {
            if g < min_in.0 {
                min_in = (g, Some(i));
            }
        } else if g > max_out.0 {
            max_out = (g, Some(i));
        }
    }
    let grad_gap = if max_out.1.is_none() {
        f64::INFINITY
    } else {
        min_in.0 - max_out.0
    };
    VertexCertificate {
        grad_gap,
        tolerance,
        is_local_max: grad_gap > tolerance,
        is_strict_saddle: grad_gap.abs() <= tolerance,
        entering: max_out.1,
        leaving: min_in.1,
    }
}

/// Certifies an integral feasible `x` as a strict local maximizer or a
/// strict saddle from its gradient.
pub fn certify_vertex(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &SelectionVector,
    params: &SelectParams,
) -> Result<VertexCertificate> {
    if x.len() != pool.len() || c.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            found: x.len().min(c.len()),
        });
    }
    if !x.is_integral() {
        return Err(Error::NotIntegral);
    }
    if !x.is_feasible(params.k) {
        return Err(Error::InvalidParams(format!(
            "integral point does not select exactly k = {} items",
            params.k
        )));
    }
    let support = x.support();
    Ok(certify_support(pool, c, &support, params))
}

/// [`certify_vertex`] for the indicator of `support`.
pub fn certify_support(
    pool: &EmbeddingMatrix,
    c: &[f64],
    support: &[usize],
    params: &SelectParams,
) -> VertexCertificate {
    let x = SelectionVector::indicator(pool.len(), support);
    let v = linalg::gather_sum(pool, support);
    let mut g = vec![0.0; pool.len()];
    objective::gradient_into(pool, c, x.as_slice(), &v, params, &mut g);
    let mask: Vec<bool> = x.as_slice().iter().map(|&xi| xi > 0.5).collect();
    certificate_from_gradient(&g, &mask)
}

/// Re-certifies `x` with penalty `lambda2`. A local maximizer at `lambda`
/// stays one for every larger penalty.
pub fn monotonicity_check(
    pool: &EmbeddingMatrix,
    c: &[f64],
    x: &SelectionVector,
    params: &SelectParams,
    lambda2: f64,
) -> Result<bool> {
    if lambda2 < params.lambda {
        return Err(Error::InvalidParams(format!(
            "lambda2 = {lambda2} must not be below lambda = {}",
            params.lambda
        )));
    }
    let raised = SelectParams {
        lambda: lambda2,
        ..params.clone()
    };
    Ok(certify_vertex(pool, c, x, &raised)?.is_local_max)
}

/// Solver state at an iteration boundary.
#[derive(Debug, Clone)]
pub struct FwState {
    pub x: SelectionVector,
    /// Cached `E^T x`.
    pub v: Vec<f64>,
    pub iteration: usize,
    pub last_gap: f64,
    pub objective: f64,
}

/// One Frank-Wolfe step as seen from the outside.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective before the step.
    pub objective: f64,
    pub gap: f64,
    pub curvature: f64,
    pub gamma: f64,
    /// `||v - E^T x||_inf` after the step.
    pub cache_drift: f64,
    /// Whether the oracle vertex equals the iterate's rounded support.
    pub integral_after: bool,
}

#[derive(Debug, Clone, Default)]
pub struct FwTrace {
    pub records: Vec<IterationRecord>,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Runs Frank-Wolfe from `init` (or the strategy in `params`).
pub fn solve_fw(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    init: Option<&SelectionVector>,
) -> Result<SolveReport> {
    run(pool, c, params, init, false).map(|(report, _, _)| report)
}

/// [`solve_fw`] recording every iteration, including the cache drift, which
/// costs an extra `O(nnz(x) d)` per step.
pub fn solve_fw_traced(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    init: Option<&SelectionVector>,
) -> Result<(SolveReport, FwTrace, FwState)> {
    let (report, trace, state) = run(pool, c, params, init, true)?;
    Ok((report, trace.unwrap_or_default(), state))
}

fn initial_point(
    c: &[f64],
    params: &SelectParams,
    init: Option<&SelectionVector>,
    topk: &mut TopK,
) -> Result<SelectionVector> {
    let n = c.len();
    match init {
        Some(x) => {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
            if !x.is_feasible(params.k) {
                return Err(Error::InvalidParams(
                    "initial point is not feasible".into(),
                ));
            }
            Ok(x.clone())
        }
        None => Ok(match params.init {
            InitStrategy::TopK => SelectionVector::indicator(n, &topk.select(c, params.k)),
            InitStrategy::Uniform => SelectionVector::uniform(n, params.k),
        }),
    }
}

fn run(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    init: Option<&SelectionVector>,
    tracing: bool,
) -> Result<(SolveReport, Option<FwTrace>, FwState)> {
    let start = Instant::now();
    let n = pool.len();
    params.validate(n)?;
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.len(),
        });
    }
    let k = params.k;
    let mut topk = TopK::default();

    if k == n {
        let all: Vec<usize> = (0..n).collect();
        let x = SelectionVector::indicator(n, &all);
        let v = linalg::gather_sum(pool, &all);
        let objective = objective::objective_from_cache(c, x.as_slice(), &v, params);
        let report = SolveReport {
            method: "fw".into(),
            selected: all,
            objective,
            iterations: 0,
            final_gap: 0.0,
            integral: true,
            local_max_certified: true,
            stop_reason: StopReason::Direct,
            wall_time: start.elapsed().as_secs_f64(),
        };
        let state = FwState {
            x,
            v,
            iteration: 0,
            last_gap: 0.0,
            objective,
        };
        return Ok((report, tracing.then(FwTrace::default), state));
    }

    let x0 = initial_point(c, params, init, &mut topk)?;
    let mut x = x0.into_inner();
    let mut v = linalg::transpose_times(pool, &x);
    let mut f = objective::objective_from_cache(c, &x, &v, params);
    let mut grad = vec![0.0; n];
    let mut trace = tracing.then(|| FwTrace {
        initial_objective: f,
        ..Default::default()
    });

    let mut last_gap = f64::INFINITY;
    let mut converged = false;
    let mut steps = 0;
    let mut grad_is_current = false;

    for t in 0..params.max_iters {
        if t > 0 && t % params.recompute_period == 0 {
            v = linalg::transpose_times(pool, &x);
            f = objective::objective_from_cache(c, &x, &v, params);
        }
        objective::gradient_into(pool, c, &x, &v, params, &mut grad);
        let s = topk.select(&grad, k);
        let (delta, d_norm_sq) = objective::vertex_step_terms(&grad, &x, &s);
        last_gap = delta;
        if delta <= params.gap_tol * f.abs().max(1.0) {
            converged = true;
            grad_is_current = true;
            break;
        }
        let etd = objective::sparse_etd(pool, &s, &v);
        let curvature = objective::curvature(params, d_norm_sq, linalg::norm_sq_f64(&etd));
        let dq = DirectionalQuadratic {
            delta,
            curvature,
            base_value: f,
        };
        let gamma = exact_line_search(&dq)?;

        if gamma >= 1.0 {
            x.iter_mut().for_each(|xi| *xi = 0.0);
            for &i in &s {
                x[i] = 1.0;
            }
            v = linalg::gather_sum(pool, &s);
        } else {
            let keep = 1.0 - gamma;
            x.iter_mut().for_each(|xi| *xi *= keep);
            for &i in &s {
                x[i] += gamma;
            }
            for (vi, di) in v.iter_mut().zip(&etd) {
                *vi += gamma * di;
            }
        }
        let f_before = f;
        f = objective::objective_from_cache(c, &x, &v, params);
        steps += 1;

        if let Some(tr) = trace.as_mut() {
            tr.records.push(IterationRecord {
                iteration: t,
                objective: f_before,
                gap: delta,
                curvature,
                gamma,
                cache_drift: objective::cache_drift(pool, &x, &v),
                integral_after: gamma >= 1.0,
            });
        }
    }

    let xs = SelectionVector::from_raw(x);
    let integral = xs.is_integral();
    let selected = xs.top_k(k);
    let local_max_certified = integral && {
        let mask: Vec<bool> = xs.as_slice().iter().map(|&xi| xi > 0.5).collect();
        if !grad_is_current {
            let vv = linalg::gather_sum(pool, &selected);
            let xi = SelectionVector::indicator(n, &selected);
            objective::gradient_into(pool, c, xi.as_slice(), &vv, params, &mut grad);
        }
        certificate_from_gradient(&grad, &mask).is_local_max
    };
    if !converged {
        log::warn!(
            "Frank-Wolfe hit the iteration cap ({}) with gap {last_gap:.3e}",
            params.max_iters
        );
    }
    let v_fresh = linalg::transpose_times(pool, xs.as_slice());
    let objective = objective::objective_from_cache(c, xs.as_slice(), &v_fresh, params);
    if let Some(tr) = trace.as_mut() {
        tr.final_objective = objective;
    }
    let report = SolveReport {
        method: "fw".into(),
        selected,
        objective,
        iterations: steps,
        final_gap: last_gap,
        integral,
        local_max_certified,
        stop_reason: if converged {
            StopReason::Converged
        } else {
            StopReason::IterationCap
        },
        wall_time: start.elapsed().as_secs_f64(),
    };
    let state = FwState {
        x: xs,
        v,
        iteration: steps,
        last_gap,
        objective: f,
    };
    Ok((report, trace, state))
}
