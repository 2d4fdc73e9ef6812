//! Recall@k, intra-list average distance and the relevance-diversity sweep.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::method::Method;
use crate::model::{EmbeddingMatrix, QueryContext, SelectParams};

pub const DEFAULT_THETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

pub const EVAL_CSV_HEADER: &str = "method,theta,k,query_id,recall,ilad,latency_ms";

/// Fraction of `gold` contained in `selected`.
pub fn recall_at_k(selected: &[usize], gold: &[usize]) -> Result<f64> {
    let gold: HashSet<usize> = gold.iter().copied().collect();
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let chosen: HashSet<usize> = selected.iter().copied().collect();
    Ok(gold.intersection(&chosen).count() as f64 / gold.len() as f64)
}

/// Mean pairwise cosine distance `1 - w_ij` over the selected items.
pub fn ilad(pool: &EmbeddingMatrix, selected: &[usize]) -> Result<f64> {
    let k = selected.len();
    if k < 2 {
        return Err(Error::TooFewItems(k));
    }
    let mut total = 0.0;
    for (a, &i) in selected.iter().enumerate() {
        for &j in &selected[a + 1..] {
            total += 1.0 - pool.similarity(i, j);
        }
    }
    Ok(2.0 * total / (k as f64 * (k as f64 - 1.0)))
}

/// Jaccard similarity of two index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: HashSet<usize> = a.iter().copied().collect();
    let b: HashSet<usize> = b.iter().copied().collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

/// `a` Pareto-dominates `b` in `(recall, ilad)`: no worse in both, better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
}

/// One (method, theta, query) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub theta: f64,
    pub k: usize,
    pub query_id: String,
    pub recall: f64,
    pub ilad: f64,
    /// Wall time of the selection call alone.
    pub latency_ms: f64,
    /// Set when the selection or a metric failed; numeric fields are NaN.
    pub error: Option<String>,
    pub selected: Vec<usize>,
}

impl EvalRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn evaluate(
    pool: &EmbeddingMatrix,
    query: &QueryContext,
    method: Method,
    params: &SelectParams,
) -> EvalRecord {
    let mut rec = EvalRecord {
        method: method.name().into(),
        theta: params.theta,
        k: params.k,
        query_id: query.id.clone(),
        recall: f64::NAN,
        ilad: f64::NAN,
        latency_ms: f64::NAN,
        error: None,
        selected: Vec::new(),
    };
    let start = Instant::now();
    let outcome = method.select(pool, &query.relevance, params);
    let latency = start.elapsed().as_secs_f64() * 1e3;
    let result = outcome.and_then(|report| {
        let gold = query.gold.as_deref().unwrap_or(&[]);
        let recall = recall_at_k(&report.selected, gold)?;
        let diversity = ilad(pool, &report.selected)?;
        Ok((report.selected, recall, diversity))
    });
    match result {
        Ok((selected, recall, diversity)) => {
            rec.recall = recall;
            rec.ilad = diversity;
            rec.latency_ms = latency;
            rec.selected = selected;
        }
        Err(e) => {
            log::warn!("{} theta={} query {}: {e}", method, params.theta, query.id);
            rec.error = Some(e.to_string());
        }
    }
    rec
}

fn record_order(a: &EvalRecord, b: &EvalRecord) -> Ordering {
    a.method
        .cmp(&b.method)
        .then(a.theta.total_cmp(&b.theta))
        .then_with(|| a.query_id.cmp(&b.query_id))
}

/// Evaluates every (method, theta, query) combination.
///
/// `base` supplies `k` and the solver knobs; its `theta` is overridden.
/// Failures are recorded per task instead of aborting the sweep. Records
/// come back sorted by (method, theta, query_id).
pub fn pareto_sweep(
    pool: &EmbeddingMatrix,
    queries: &[QueryContext],
    methods: &[Method],
    thetas: &[f64],
    base: &SelectParams,
) -> Result<Vec<EvalRecord>> {
    if let Some(&t) = thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidParams(format!("theta {t} outside [0, 1]")));
    }
    let tasks: Vec<(Method, SelectParams, &QueryContext)> = methods
        .iter()
        .flat_map(|&m| {
            thetas.iter().flat_map(move |&theta| {
                queries.iter().map(move |q| {
                    (
                        m,
                        SelectParams {
                            theta,
                            ..base.clone()
                        },
                        q,
                    )
                })
            })
        })
        .collect();
    let mut records: Vec<EvalRecord> = if linalg::threads() > 1 {
        linalg::install(|| {
            tasks
                .par_iter()
                .map(|(m, p, q)| evaluate(pool, q, *m, p))
                .collect()
        })
    } else {
        tasks.iter().map(|(m, p, q)| evaluate(pool, q, *m, p)).collect()
    };
    records.sort_by(record_order);
    Ok(records)
}

/// Per-(method, theta) aggregate over queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub method: String,
    pub theta: f64,
    pub k: usize,
    pub queries: usize,
    pub failed: usize,
    pub mean_recall: f64,
    pub mean_ilad: f64,
    pub mean_latency_ms: f64,
    pub p95_latency_ms: f64,
}

impl SweepPoint {
    pub fn point(&self) -> (f64, f64) {
        (self.mean_recall, self.mean_ilad)
    }
}

/// Nearest-rank percentile of `values` (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Means (and p95 latency) over the successful records of each
/// (method, theta) group, in record order.
pub fn summarize(records: &[EvalRecord]) -> Vec<SweepPoint> {
    let mut out: Vec<SweepPoint> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let head = &records[start];
        let end = records[start..]
            .iter()
            .position(|r| r.method != head.method || r.theta != head.theta)
            .map_or(records.len(), |p| start + p);
        let group = &records[start..end];
        let ok: Vec<&EvalRecord> = group.iter().filter(|r| !r.failed()).collect();
        let lat: Vec<f64> = ok.iter().map(|r| r.latency_ms).collect();
        out.push(SweepPoint {
            method: head.method.clone(),
            theta: head.theta,
            k: head.k,
            queries: group.len(),
            failed: group.len() - ok.len(),
            mean_recall: mean(&ok.iter().map(|r| r.recall).collect::<Vec<_>>()),
            mean_ilad: mean(&ok.iter().map(|r| r.ilad).collect::<Vec<_>>()),
            mean_latency_ms: mean(&lat),
            p95_latency_ms: percentile(&lat, 0.95),
        });
        start = end;
    }
    out
}

/// Quotes a CSV field when it contains a separator, quote or newline.
/// Writes per-query records as `method,theta,k,query_id,recall,ilad,latency_ms`.
pub fn write_eval_csv<W: Write>(out: W, records: &[EvalRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVAL_CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.method.clone(),
            r.theta.to_string(),
            r.k.to_string(),
            r.query_id.clone(),
            r.recall.to_string(),
            r.ilad.to_string(),
            r.latency_ms.to_string(),
        ])?;
    }
    w.flush()
}
