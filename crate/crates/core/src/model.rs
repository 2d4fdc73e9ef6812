//! Shared domain types: the candidate pool, query context, solver knobs,
//! fractional selections and solve reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Rows whose norm falls below this are rejected instead of rescaled.
pub const MIN_ROW_NORM: f64 = 1e-6;
/// Coordinates within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Penalty at which the relaxation is tight.
pub const TIGHT_LAMBDA: f64 = 2.0;

/// An `n x d` pool of unit-norm embeddings stored row-major as `f32`.
///
/// Construction always goes through [`validate_pool`], so every row has unit
/// norm up to `f32` rounding. The Gram matrix is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Validates and normalizes a flat row-major buffer.
    pub fn from_flat(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        validate_pool(n, d, data).map(|(m, _)| m)
    }

    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend(r);
        }
        Self::from_flat(n, d, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Cosine similarity `w_ij`, computed on demand.
    #[inline]
    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        linalg::dot_f32(self.row(i), self.row(j))
    }

    /// A new pool holding the given rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n: rows.len(),
            d: self.d,
            data,
        }
    }
}

/// Rescales rows whose norm is off by more than `1e-6` to unit norm.
///
/// Returns the validated matrix and the number of rescaled rows. Rows that are
/// already unit-norm up to `f32` rounding are left bit-for-bit untouched, so
/// validation is idempotent.
pub fn validate_pool(n: usize, d: usize, mut data: Vec<f32>) -> Result<(EmbeddingMatrix, usize)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParams(format!(
            "pool must have n >= 1 and d >= 1 (got n={n}, d={d})"
        )));
    }
    if data.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            found: data.len(),
        });
    }
    let mut renormalized = 0;
    for (index, row) in data.chunks_exact_mut(d).enumerate() {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let norm = linalg::dot_f32(row, row).sqrt();
        if norm < MIN_ROW_NORM {
            return Err(Error::ZeroRow { index });
        }
        if (norm - 1.0).abs() > 1e-6 {
            renormalized += 1;
            for x in row.iter_mut() {
                *x = (*x as f64 / norm) as f32;
            }
        }
    }
    if renormalized > 0 {
        log::info!("renormalized {renormalized} of {n} rows to unit norm");
    }
    Ok((EmbeddingMatrix { n, d, data }, renormalized))
}

/// `c_i = <e_i, q>` for every row.
pub fn relevance_from_query(pool: &EmbeddingMatrix, query: &[f32]) -> Result<Vec<f64>> {
    if query.len() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            found: query.len(),
        });
    }
    Ok(pool.rows().map(|r| linalg::dot_f32(r, query)).collect())
}

/// Relevance scores for one query, optionally with its gold evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryContext {
    pub id: String,
    /// Unit-norm query embedding; `None` when relevance was supplied directly.
    pub query: Option<Vec<f32>>,
    pub relevance: Vec<f64>,
    pub gold: Option<Vec<usize>>,
}

impl QueryContext {
    /// Normalizes `query` and derives relevance against `pool`.
    pub fn from_query(
        pool: &EmbeddingMatrix,
        id: impl Into<String>,
        mut query: Vec<f32>,
        gold: Option<Vec<usize>>,
    ) -> Result<Self> {
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index: 0 });
        }
        let norm = linalg::dot_f32(&query, &query).sqrt();
        if norm < MIN_ROW_NORM {
            return Err(Error::ZeroRow { index: 0 });
        }
        for x in &mut query {
            *x = (*x as f64 / norm) as f32;
        }
        let relevance = relevance_from_query(pool, &query)?;
        Self::check_gold(gold.as_deref(), pool.len())?;
        Ok(Self {
            id: id.into(),
            query: Some(query),
            relevance,
            gold,
        })
    }

    /// Externally computed relevance (for instance from a cross-encoder).
    pub fn from_relevance(
        id: impl Into<String>,
        relevance: Vec<f64>,
        gold: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(index) = relevance.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Self::check_gold(gold.as_deref(), relevance.len())?;
        Ok(Self {
            id: id.into(),
            query: None,
            relevance,
            gold,
        })
    }

    fn check_gold(gold: Option<&[usize]>, n: usize) -> Result<()> {
        if let Some(&bad) = gold.and_then(|g| g.iter().find(|&&i| i >= n)) {
            return Err(Error::InvalidParams(format!(
                "gold index {bad} out of range for pool of {n}"
            )));
        }
        Ok(())
    }
}

/// Starting point for the Frank-Wolfe solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    /// Indicator of the `k` most relevant items.
    #[default]
    TopK,
    /// `k/n` in every coordinate.
    Uniform,
}

/// Solver knobs shared by every selection method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectParams {
    pub k: usize,
    /// Relevance weight in `[0, 1]`; `1` is plain top-k.
    pub theta: f64,
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative Frank-Wolfe gap at which the solver stops.
    pub gap_tol: f64,
    /// Iterations between full recomputations of the `E^T x` cache.
    pub recompute_period: usize,
    pub init: InitStrategy,
    /// Permit `lambda < 2`, where the relaxation is no longer tight.
    pub allow_small_lambda: bool,
}

impl SelectParams {
    pub fn new(k: usize, theta: f64) -> Self {
        Self {
            k,
            theta,
            lambda: TIGHT_LAMBDA,
            max_iters: 1000,
            gap_tol: 1e-9,
            recompute_period: 50,
            init: InitStrategy::TopK,
            allow_small_lambda: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn allowing_small_lambda(mut self) -> Self {
        self.allow_small_lambda = true;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.k == 0 || self.k > n {
            return bad(format!("k must satisfy 1 <= k <= n (k={}, n={n})", self.k));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1] (got {})", self.theta));
        }
        if !self.lambda.is_finite() {
            return bad(format!("lambda must be finite (got {})", self.lambda));
        }
        if self.lambda < TIGHT_LAMBDA {
            if !self.allow_small_lambda {
                return bad(format!(
                    "lambda must be >= 2 for a tight relaxation (got {}); pass the override to experiment",
                    self.lambda
                ));
            }
            log::warn!(
                "lambda = {} < 2: relaxation may not be tight, outputs can be fractional",
                self.lambda
            );
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if self.recompute_period == 0 {
            return bad("recompute_period must be >= 1".into());
        }
        if !(self.gap_tol >= 0.0) {
            return bad(format!("gap_tol must be >= 0 (got {})", self.gap_tol));
        }
        Ok(())
    }
}

/// A point of the polytope `{0 <= x <= 1, sum x = k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionVector(Vec<f64>);

impl SelectionVector {
    /// Wraps `x` after checking box and cardinality constraints.
    pub fn new(x: Vec<f64>, k: usize) -> Result<Self> {
        let s = Self(x);
        if !s.is_feasible(k) {
            return Err(Error::InvalidParams(format!(
                "selection vector is not feasible for k = {k}"
            )));
        }
        Ok(s)
    }

    pub(crate) fn from_raw(x: Vec<f64>) -> Self {
        Self(x)
    }

    pub fn indicator(n: usize, selected: &[usize]) -> Self {
        let mut x = vec![0.0; n];
        for &i in selected {
            x[i] = 1.0;
        }
        Self(x)
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        Self(vec![k as f64 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_feasible(&self, k: usize) -> bool {
        let in_box = self
            .0
            .iter()
            .all(|&v| v.is_finite() && (-1e-9..=1.0 + 1e-9).contains(&v));
        let sum: f64 = self.0.iter().sum();
        in_box && (sum - k as f64).abs() <= 1e-6 * (k as f64).max(1.0)
    }

    pub fn is_integral(&self) -> bool {
        self.0
            .iter()
            .all(|&v| v.abs() <= INTEGRALITY_TOL || (v - 1.0).abs() <= INTEGRALITY_TOL)
    }

    /// Indices with value above one half, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.5).collect()
    }

    /// The `k` largest coordinates, ascending by index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx = crate::fw::top_k_indices(&self.0, k);
        idx.sort_unstable();
        idx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Frank-Wolfe gap fell below tolerance.
    Converged,
    /// Iteration cap hit; the report holds the last iterate.
    IterationCap,
    /// Closed-form or enumerative method, no iteration involved.
    Direct,
}

/// Outcome of one selection call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    /// Chosen indices, ascending. For fractional outputs these are the `k`
    /// largest coordinates.
    pub selected: Vec<usize>,
    /// Objective the method maximizes: the relaxed quadratic for `fw` and
    /// `exact`, total relevance for `topk`, the summed greedy scores for
    /// `mmr` and the kernel log-determinant for `dpp`.
    pub objective: f64,
    pub iterations: usize,
    pub final_gap: f64,
    pub integral: bool,
    pub local_max_certified: bool,
    pub stop_reason: StopReason,
    /// Seconds.
    pub wall_time: f64,
}
