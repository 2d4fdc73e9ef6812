//! Comparison selectors: exact top-k, greedy MMR and fast greedy DPP MAP.
//!
//! All three return exactly `k` distinct indices and break ties toward the
//! lower index, the same rule the Frank-Wolfe oracle uses.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fw::top_k_indices;
use crate::linalg;
use crate::model::{EmbeddingMatrix, SolveReport, StopReason};

/// Candidates whose residual volume falls to this level are dropped.
pub const DPP_MIN_RESIDUAL: f64 = 1e-12;
/// At or above this `theta` the DPP quality weights degenerate to top-k.
pub const DPP_TOPK_THETA: f64 = 1.0 - 1e-9;

/// Selection order of a greedy baseline and the score behind each pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyTrace {
    pub order: Vec<usize>,
    pub marginal_scores: Vec<f64>,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!(
            "k must satisfy 1 <= k <= n (k={k}, n={n})"
        )));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParams(format!(
            "theta must lie in [0, 1] (got {theta})"
        )));
    }
    Ok(())
}

fn direct_report(method: &str, mut selected: Vec<usize>, objective: f64, start: Instant) -> SolveReport {
    selected.sort_unstable();
    SolveReport {
        method: method.into(),
        selected,
        objective,
        iterations: 0,
        final_gap: 0.0,
        integral: true,
        local_max_certified: false,
        stop_reason: StopReason::Direct,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// The `k` most relevant items.
pub fn select_topk(c: &[f64], k: usize) -> Result<SolveReport> {
    let start = Instant::now();
    check_k(c.len(), k)?;
    let selected = top_k_indices(c, k);
    let total = selected.iter().map(|&i| c[i]).sum();
    Ok(direct_report("topk", selected, total, start))
}

/// Greedy maximal marginal relevance.
///
/// The first pick is the most relevant item. Each later pick maximizes
/// `theta * c_i - (1 - theta) * max_{j in S} w_ij` over unselected items,
/// with the running max-similarity vector refreshed by one pass over the
/// pool per pick.
pub fn select_mmr(
    pool: &EmbeddingMatrix,
    c: &[f64],
    k: usize,
    theta: f64,
) -> Result<(SolveReport, GreedyTrace)> {
    let start = Instant::now();
    let n = pool.len();
    check_k(n, k)?;
    check_theta(theta)?;
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.len(),
        });
    }
    let mut taken = vec![false; n];
    let mut max_sim = vec![f64::NEG_INFINITY; n];
    let mut sims = vec![0.0; n];
    let mut trace = GreedyTrace {
        order: Vec::with_capacity(k),
        marginal_scores: Vec::with_capacity(k),
    };

    for step in 0..k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let score = if step == 0 {
                c[i]
            } else {
                theta * c[i] - (1.0 - theta) * max_sim[i]
            };
            if score > best.0 || best.1 == usize::MAX {
                best = (score, i);
            }
        }
        let (score, j) = best;
        taken[j] = true;
        trace.order.push(j);
        trace.marginal_scores.push(score);
        if step + 1 < k {
            linalg::row_similarities_into(pool, j, &mut sims);
            for (m, &s) in max_sim.iter_mut().zip(&sims) {
                if s > *m {
                    *m = s;
                }
            }
        }
    }
    let total = trace.marginal_scores.iter().sum();
    let report = direct_report("mmr", trace.order.clone(), total, start);
    Ok((report, trace))
}

/// Fast greedy MAP inference for the kernel
/// `L = Diag(r) W Diag(r)` with `r_i = exp(beta c_i)`, `beta = theta / (1 - theta)`.
///
/// Keeps, per candidate, its residual `d_i^2` and its row of the incremental
/// Cholesky factor, so each pick costs one pass over the pool plus `O(n t)`.
/// The marginal score of a pick is `log det(L_{S+i}) - log det(L_S)`.
/// Candidates with residual at most `1e-12` add no volume and are skipped;
/// if every remaining candidate is degenerate, the rest of the budget is
/// filled by relevance.
pub fn select_dpp_greedy(
    pool: &EmbeddingMatrix,
    c: &[f64],
    k: usize,
    theta: f64,
) -> Result<(SolveReport, GreedyTrace)> {
    let start = Instant::now();
    let n = pool.len();
    check_k(n, k)?;
    check_theta(theta)?;
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.len(),
        });
    }
    if theta >= DPP_TOPK_THETA {
        let mut report = select_topk(c, k)?;
        report.method = "dpp".into();
        let mut order = report.selected.clone();
        order.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
        let scores = order.iter().map(|&i| c[i]).collect();
        return Ok((
            report,
            GreedyTrace {
                order,
                marginal_scores: scores,
            },
        ));
    }

    let beta = theta / (1.0 - theta);
    // Qualities are shifted by the top relevance to stay finite; the shift
    // scales every residual by the same factor and is undone in the scores.
    let c_max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let quality: Vec<f64> = c.iter().map(|&ci| (beta * (ci - c_max)).exp()).collect();
    let log_shift = 2.0 * beta * c_max;

    let mut residual: Vec<f64> = (0..n)
        .map(|i| quality[i] * quality[i] * linalg::dot_f32(pool.row(i), pool.row(i)))
        .collect();
    let mut alive: Vec<bool> = residual.iter().map(|&r| r > DPP_MIN_RESIDUAL).collect();
    let mut taken = vec![false; n];
    let mut chol = vec![0.0; n * k];
    let mut sims = vec![0.0; n];
    let mut trace = GreedyTrace {
        order: Vec::with_capacity(k),
        marginal_scores: Vec::with_capacity(k),
    };

    for t in 0..k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..n {
            if alive[i] && residual[i] > best.0 {
                best = (residual[i], i);
            }
        }
        let (d2_j, j) = best;
        if j == usize::MAX {
            let remaining: Vec<f64> = (0..n)
                .map(|i| if taken[i] { f64::NEG_INFINITY } else { c[i] })
                .collect();
            let mut fill = top_k_indices(&remaining, k - t);
            fill.sort_by(|&a, &b| c[b].total_cmp(&c[a]).then(a.cmp(&b)));
            log::debug!("dpp: {} degenerate picks filled by relevance", fill.len());
            for i in fill {
                trace.order.push(i);
                let r = residual[i].max(f64::MIN_POSITIVE);
                trace.marginal_scores.push(r.ln() + log_shift);
            }
            break;
        }
        taken[j] = true;
        alive[j] = false;
        trace.order.push(j);
        trace.marginal_scores.push(d2_j.ln() + log_shift);
        if t + 1 == k {
            break;
        }
        let d_j = d2_j.sqrt();
        linalg::row_similarities_into(pool, j, &mut sims);
        let (head, rest) = chol.split_at_mut(j * k);
        let (row_j, tail) = rest.split_at_mut(k);
        let row_j = &row_j[..t];
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let row_i = if i < j {
                &mut head[i * k..(i + 1) * k]
            } else {
                &mut tail[(i - j - 1) * k..(i - j) * k]
            };
            let prior: f64 = row_j.iter().zip(&row_i[..t]).map(|(a, b)| a * b).sum();
            let e = (quality[j] * quality[i] * sims[i] - prior) / d_j;
            row_i[t] = e;
            residual[i] -= e * e;
            if residual[i] <= DPP_MIN_RESIDUAL {
                alive[i] = false;
            }
        }
    }
    let total = trace.marginal_scores.iter().sum();
    let report = direct_report("dpp", trace.order.clone(), total, start);
    Ok((report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{clustered_pool, random_pool, random_relevance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Recomputes every candidate's max similarity from scratch each step.
    fn naive_mmr(pool: &EmbeddingMatrix, c: &[f64], k: usize, theta: f64) -> Vec<usize> {
        let n = pool.len();
        let mut order: Vec<usize> = Vec::new();
        for step in 0..k {
            let mut best: Option<(f64, usize)> = None;
            for i in (0..n).filter(|i| !order.contains(i)) {
                let score = if step == 0 {
                    c[i]
                } else {
                    let m = order
                        .iter()
                        .map(|&j| pool.similarity(i, j))
                        .fold(f64::NEG_INFINITY, f64::max);
                    theta * c[i] - (1.0 - theta) * m
                };
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, i));
                }
            }
            order.push(best.unwrap().1);
        }
        order
    }

    #[test]
    fn topk_examples() {
        assert_eq!(select_topk(&[0.9, 0.1, 0.5], 2).unwrap().selected, vec![0, 2]);
        assert_eq!(select_topk(&[0.3; 5], 3).unwrap().selected, vec![0, 1, 2]);
        assert!(select_topk(&[0.3; 5], 6).is_err());
    }

    #[test]
    fn mmr_matches_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let pool = clustered_pool(&mut rng, 10, 5, 3, 0.5);
            let c = random_relevance(&mut rng, &pool);
            let (_, trace) = select_mmr(&pool, &c, 3, 0.5).unwrap();
            assert_eq!(trace.order, naive_mmr(&pool, &c, 3, 0.5));
        }
    }

    #[test]
    fn mmr_degenerate_settings() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = random_pool(&mut rng, 30, 6);
        let c = random_relevance(&mut rng, &pool);
        let (r, _) = select_mmr(&pool, &c, 5, 1.0).unwrap();
        assert_eq!(r.selected, select_topk(&c, 5).unwrap().selected);
        for theta in [0.0, 0.3, 0.9] {
            let (r, _) = select_mmr(&pool, &c, 1, theta).unwrap();
            assert_eq!(r.selected, select_topk(&c, 1).unwrap().selected);
        }
    }

    #[test]
    fn dpp_first_pick_is_most_relevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = random_pool(&mut rng, 30, 6);
        let c = random_relevance(&mut rng, &pool);
        for theta in [0.1, 0.5, 0.9] {
            let (r, _) = select_dpp_greedy(&pool, &c, 1, theta).unwrap();
            assert_eq!(r.selected, select_topk(&c, 1).unwrap().selected);
        }
    }

    #[test]
    fn dpp_never_takes_both_duplicates() {
        let pool = EmbeddingMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.6, 0.8],
        ])
        .unwrap();
        let c = [0.9, 0.9, 0.3, 0.2];
        let (r, trace) = select_dpp_greedy(&pool, &c, 2, 0.5).unwrap();
        assert_eq!(r.selected, vec![0, 2]);
        assert!(trace.marginal_scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn dpp_fills_when_rank_is_exhausted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool = random_pool(&mut rng, 10, 2);
        let c = random_relevance(&mut rng, &pool);
        let (r, trace) = select_dpp_greedy(&pool, &c, 5, 0.5).unwrap();
        assert_eq!(r.selected.len(), 5);
        let mut o = trace.order.clone();
        o.sort_unstable();
        o.dedup();
        assert_eq!(o.len(), 5);
    }

    #[test]
    fn dpp_theta_one_is_topk() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pool = random_pool(&mut rng, 20, 4);
        let c = random_relevance(&mut rng, &pool);
        let (r, _) = select_dpp_greedy(&pool, &c, 4, 1.0).unwrap();
        assert_eq!(r.selected, select_topk(&c, 4).unwrap().selected);
    }
}
