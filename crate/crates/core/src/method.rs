use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::fw;
use crate::linalg;
use crate::model::{EmbeddingMatrix, SelectParams, SolveReport, StopReason};
use crate::objective;
use crate::oracle;

/// A selection method reachable from the sweep, benchmark and CLI drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fw,
    Mmr,
    Dpp,
    #[serde(rename = "topk")]
    TopK,
    Exact,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Fw, Method::Mmr, Method::Dpp, Method::TopK, Method::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fw => "fw",
            Method::Mmr => "mmr",
            Method::Dpp => "dpp",
            Method::TopK => "topk",
            Method::Exact => "exact",
        }
    }

    /// Runs the method on relevance `c`. Uses `params.k` and `params.theta`;
    /// the remaining knobs only matter for `fw` and `exact`.
    pub fn select(self, pool: &EmbeddingMatrix, c: &[f64], params: &SelectParams) -> Result<SolveReport> {
        let n = pool.len();
        params.validate(n)?;
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
        if params.k == n && self != Method::Fw {
            return Ok(full_set(self, pool, c, params));
        }
        match self {
            Method::Fw => fw::solve_fw(pool, c, params, None),
            Method::Mmr => baselines::select_mmr(pool, c, params.k, params.theta).map(|(r, _)| r),
            Method::Dpp => {
                baselines::select_dpp_greedy(pool, c, params.k, params.theta).map(|(r, _)| r)
            }
            Method::TopK => baselines::select_topk(c, params.k),
            Method::Exact => exact(pool, c, params),
        }
    }
}

fn full_set(method: Method, pool: &EmbeddingMatrix, c: &[f64], params: &SelectParams) -> SolveReport {
    let start = Instant::now();
    let all: Vec<usize> = (0..pool.len()).collect();
    let x = vec![1.0; pool.len()];
    let v = linalg::gather_sum(pool, &all);
    SolveReport {
        method: method.name().into(),
        selected: all,
        objective: objective::objective_from_cache(c, &x, &v, params),
        iterations: 0,
        final_gap: 0.0,
        integral: true,
        local_max_certified: true,
        stop_reason: StopReason::Direct,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn exact(pool: &EmbeddingMatrix, c: &[f64], params: &SelectParams) -> Result<SolveReport> {
    let start = Instant::now();
    let r = oracle::brute_force_ccbqp(pool, c, params)?;
    let cert = fw::certify_support(pool, c, &r.best_set, params);
    Ok(SolveReport {
        method: "exact".into(),
        selected: r.best_set,
        objective: r.best_value,
        iterations: 0,
        final_gap: 0.0,
        integral: true,
        local_max_certified: cert.is_local_max,
        stop_reason: StopReason::Direct,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParams(format!("unknown method '{s}'")))
    }
}
