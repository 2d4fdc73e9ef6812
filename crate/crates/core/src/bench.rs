//! Latency benchmarks over a grid of methods, k and theta.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::method::Method;
use crate::metrics::percentile;
use crate::model::{EmbeddingMatrix, QueryContext, SelectParams};

pub const MIN_WARMUP: usize = 2;
pub const MIN_RUNS: usize = 5;

pub const BENCH_CSV_HEADER: &str = "method,n,d,k,theta,runs,mean_ms,p50_ms,p95_ms,iters_mean";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    pub k_values: Vec<usize>,
    pub thetas: Vec<f64>,
    pub warmup: usize,
    pub runs: usize,
    /// Solver knobs shared by every cell; `k` and `theta` are overridden.
    pub lambda: f64,
    pub max_iters: usize,
    pub gap_tol: f64,
    pub threads: usize,
    /// Free-form provenance of the pool (for instance the synth config).
    pub pool: serde_json::Value,
}

impl BenchConfig {
    pub fn new(methods: Vec<Method>, k_values: Vec<usize>, thetas: Vec<f64>) -> Self {
        let base = SelectParams::new(1, 0.5);
        Self {
            methods,
            k_values,
            thetas,
            warmup: MIN_WARMUP,
            runs: MIN_RUNS,
            lambda: base.lambda,
            max_iters: base.max_iters,
            gap_tol: base.gap_tol,
            threads: linalg::threads(),
            pool: serde_json::Value::Null,
        }
    }

    fn params(&self, k: usize, theta: f64) -> SelectParams {
        SelectParams {
            lambda: self.lambda,
            max_iters: self.max_iters,
            gap_tol: self.gap_tol,
            ..SelectParams::new(k, theta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub theta: f64,
    pub runs: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Mean iteration count; only reported for `fw`.
    pub iters_mean: Option<f64>,
    /// Selections of the timed runs, for reproducibility checks.
    #[serde(skip)]
    pub selections: Vec<Vec<usize>>,
}

/// Times every (method, k, theta) cell. Run `r` (warmups included) uses
/// query `r mod queries.len()`; warmup runs are discarded.
pub fn scaling_suite(
    pool: &EmbeddingMatrix,
    queries: &[QueryContext],
    config: &BenchConfig,
) -> Result<Vec<BenchResult>> {
    if queries.is_empty() {
        return Err(Error::InvalidParams("benchmark needs at least one query".into()));
    }
    if config.warmup < MIN_WARMUP || config.runs < MIN_RUNS {
        return Err(Error::InvalidParams(format!(
            "need at least {MIN_WARMUP} warmup and {MIN_RUNS} timed runs"
        )));
    }
    let mut out = Vec::new();
    for &method in &config.methods {
        for &k in &config.k_values {
            for &theta in &config.thetas {
                let params = config.params(k, theta);
                out.push(bench_cell(pool, queries, method, &params, config)?);
            }
        }
    }
    Ok(out)
}

fn bench_cell(
    pool: &EmbeddingMatrix,
    queries: &[QueryContext],
    method: Method,
    params: &SelectParams,
    config: &BenchConfig,
) -> Result<BenchResult> {
    let mut times = Vec::with_capacity(config.runs);
    let mut iters = Vec::with_capacity(config.runs);
    let mut selections = Vec::with_capacity(config.runs);
    for r in 0..config.warmup + config.runs {
        let c = &queries[r % queries.len()].relevance;
        let start = Instant::now();
        let report = method.select(pool, c, params)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if r >= config.warmup {
            times.push(ms);
            iters.push(report.iterations as f64);
            selections.push(report.selected);
        }
    }
    log::info!(
        "{method} k={} theta={}: p50 {:.2} ms",
        params.k,
        params.theta,
        percentile(&times, 0.5)
    );
    Ok(BenchResult {
        method: method.name().into(),
        n: pool.len(),
        d: pool.dim(),
        k: params.k,
        theta: params.theta,
        runs: times.len(),
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        p50_ms: percentile(&times, 0.5),
        p95_ms: percentile(&times, 0.95),
        iters_mean: (method == Method::Fw).then(|| iters.iter().sum::<f64>() / iters.len() as f64),
        selections,
    })
}

/// `time(k_hi) / time(k_lo)` on mean latency for a method at fixed theta.
pub fn k_ratio(results: &[BenchResult], method: &str, theta: f64, k_lo: usize, k_hi: usize) -> Option<f64> {
    let find = |k| {
        results
            .iter()
            .find(|r| r.method == method && r.k == k && r.theta == theta)
            .map(|r| r.mean_ms)
    };
    Some(find(k_hi)? / find(k_lo)?)
}

/// `time(slow) / time(fast)` at a fixed (k, theta).
pub fn speedup(results: &[BenchResult], fast: &str, slow: &str, k: usize, theta: f64) -> Option<f64> {
    let find = |m: &str| {
        results
            .iter()
            .find(|r| r.method == m && r.k == k && r.theta == theta)
            .map(|r| r.mean_ms)
    };
    Some(find(slow)? / find(fast)?)
}

pub fn write_bench_csv<W: Write>(out: W, results: &[BenchResult]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_CSV_HEADER.split(','))?;
    for r in results {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.k.to_string(),
            r.theta.to_string(),
            r.runs.to_string(),
            r.mean_ms.to_string(),
            r.p50_ms.to_string(),
            r.p95_ms.to_string(),
            r.iters_mean.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    w.flush()
}
