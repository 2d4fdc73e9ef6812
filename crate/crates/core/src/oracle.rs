//! Exhaustive ground truth for tiny instances.
//!
//! These routines materialize the dense Gram matrix and are guarded to small
//! pools; the solvers never go through them.

use crate::error::{Error, Result};
use crate::fw::{certificate_from_gradient, VertexCertificate};
use crate::model::{EmbeddingMatrix, SelectParams};

/// Largest number of `k`-subsets [`brute_force_ccbqp`] will enumerate.
pub const MAX_SUBSETS: u128 = 1_000_000;
/// Largest pool for which a dense Gram matrix is formed.
pub const MAX_DENSE_N: usize = 1024;
/// Largest pool for the relaxation grid search.
pub const MAX_GRID_N: usize = 8;
/// Largest number of grid points [`grid_search_relaxation`] will visit.
pub const MAX_GRID_POINTS: u128 = 50_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// `W = E E^T` as nested rows.
pub fn dense_gram(pool: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    assert!(
        pool.len() <= MAX_DENSE_N,
        "dense Gram matrix requested for n = {}",
        pool.len()
    );
    let n = pool.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = pool.similarity(i, j);
            w[i][j] = s;
            w[j][i] = s;
        }
    }
    w
}

/// Everything learned from enumerating all `k`-subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    /// Lexicographically first maximizer.
    pub best_set: Vec<usize>,
    pub best_value: f64,
    /// Vertices certified as strict local maxima.
    pub local_maxima: Vec<Vec<usize>>,
    /// Stationary vertices with a zero gradient gap.
    pub strict_saddles: Vec<Vec<usize>>,
    /// Every subset with its objective, when requested.
    pub value_table: Option<Vec<(Vec<usize>, f64)>>,
}

/// Exact maximum of the binary problem by enumeration.
///
/// On binary points `||x||^2 = k`, so the `lambda`-shifted objective and the
/// unshifted one differ by the constant `(1-theta) lambda k` and share their
/// maximizers.
pub fn brute_force_ccbqp(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
) -> Result<ExhaustiveResult> {
    enumerate(pool, c, params, false)
}

/// [`brute_force_ccbqp`] that also returns the full value table.
pub fn brute_force_ccbqp_with_table(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
) -> Result<ExhaustiveResult> {
    enumerate(pool, c, params, true)
}

/// Rejects instances the enumeration would take too long on.
pub fn check_enumerable(n: usize, k: usize) -> Result<()> {
    let count = binomial(n, k);
    if count > MAX_SUBSETS {
        return Err(Error::TooLarge {
            count,
            limit: MAX_SUBSETS,
        });
    }
    if n > MAX_DENSE_N {
        return Err(Error::TooLarge {
            count: n as u128,
            limit: MAX_DENSE_N as u128,
        });
    }
    Ok(())
}

struct Enumerator<'a> {
    w: Vec<Vec<f64>>,
    c: &'a [f64],
    params: &'a SelectParams,
    n: usize,
    k: usize,
    chosen: Vec<usize>,
    /// `rowsum[t][i] = sum_{j in chosen[..t]} w_ij`.
    rowsum: Vec<Vec<f64>>,
    best: Option<(f64, Vec<usize>)>,
    local_maxima: Vec<Vec<usize>>,
    saddles: Vec<Vec<usize>>,
    table: Option<Vec<(Vec<usize>, f64)>>,
    mask: Vec<bool>,
    grad: Vec<f64>,
}

impl Enumerator<'_> {
    fn descend(&mut self, next: usize, rel: f64, pair: f64) {
        let depth = self.chosen.len();
        if depth == self.k {
            self.leaf(rel, pair);
            return;
        }
        for i in next..=self.n - (self.k - depth) {
            let cross = self.rowsum[depth][i];
            let (lower, upper) = self.rowsum.split_at_mut(depth + 1);
            for (dst, (src, wi)) in upper[0].iter_mut().zip(lower[depth].iter().zip(&self.w[i])) {
                *dst = src + wi;
            }
            self.chosen.push(i);
            self.descend(i + 1, rel + self.c[i], pair + self.w[i][i] + 2.0 * cross);
            self.chosen.pop();
        }
    }

    fn leaf(&mut self, rel: f64, pair: f64) {
        let p = self.params;
        let k = self.k as f64;
        let value = p.theta * (k - 1.0) * rel + (1.0 - p.theta) * (p.lambda * k - pair);
        if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
            self.best = Some((value, self.chosen.clone()));
        }
        if let Some(t) = self.table.as_mut() {
            t.push((self.chosen.clone(), value));
        }
        let sums = &self.rowsum[self.k];
        self.mask.iter_mut().for_each(|m| *m = false);
        for &i in &self.chosen {
            self.mask[i] = true;
        }
        for i in 0..self.n {
            let xi = if self.mask[i] { 1.0 } else { 0.0 };
            self.grad[i] = p.theta * (k - 1.0) * self.c[i]
                + 2.0 * (1.0 - p.theta) * (p.lambda * xi - sums[i]);
        }
        let cert: VertexCertificate = certificate_from_gradient(&self.grad, &self.mask);
        if cert.is_local_max {
            self.local_maxima.push(self.chosen.clone());
        } else if cert.is_strict_saddle {
            self.saddles.push(self.chosen.clone());
        }
    }
}

fn enumerate(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    keep_table: bool,
) -> Result<ExhaustiveResult> {
    let n = pool.len();
    params.validate(n)?;
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: c.len(),
        });
    }
    check_enumerable(n, params.k)?;
    let mut e = Enumerator {
        w: dense_gram(pool),
        c,
        params,
        n,
        k: params.k,
        chosen: Vec::with_capacity(params.k),
        rowsum: vec![vec![0.0; n]; params.k + 1],
        best: None,
        local_maxima: Vec::new(),
        saddles: Vec::new(),
        table: keep_table.then(Vec::new),
        mask: vec![false; n],
        grad: vec![0.0; n],
    };
    e.descend(0, 0.0, 0.0);
    let (best_value, best_set) = e.best.expect("at least one subset");
    Ok(ExhaustiveResult {
        best_set,
        best_value,
        local_maxima: e.local_maxima,
        strict_saddles: e.saddles,
        value_table: e.table,
    })
}

/// Result of maximizing the relaxed objective over a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub grid_max: f64,
    /// Lexicographically first grid maximizer.
    pub argmax: Vec<f64>,
    pub integral_optimum: f64,
    pub points: u64,
}

impl GridSearch {
    /// Relaxed grid maximum minus the integral optimum.
    pub fn gap(&self) -> f64 {
        self.grid_max - self.integral_optimum
    }
}

/// Number of integer vectors in `[0, m]^n` summing to `total`.
fn grid_count(n: usize, m: usize, total: usize) -> u128 {
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for _ in 0..n {
        let mut next = vec![0u128; total + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for a in 0..=m.min(total - s) {
                next[s + a] = next[s + a].saturating_add(w);
            }
        }
        ways = next;
    }
    ways[total]
}

/// Maximizes the relaxed objective over every feasible point whose
/// coordinates are multiples of `1 / resolution`, and compares with the
/// integral optimum.
pub fn grid_search_relaxation(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    resolution: usize,
) -> Result<GridSearch> {
    let n = pool.len();
    if n > MAX_GRID_N {
        return Err(Error::TooLarge {
            count: n as u128,
            limit: MAX_GRID_N as u128,
        });
    }
    if resolution == 0 {
        return Err(Error::InvalidParams("grid resolution must be >= 1".into()));
    }
    let integral = brute_force_ccbqp(pool, c, params)?;
    let total = params.k * resolution;
    let count = grid_count(n, resolution, total);
    if count > MAX_GRID_POINTS {
        return Err(Error::TooLarge {
            count,
            limit: MAX_GRID_POINTS,
        });
    }
    let w = dense_gram(pool);
    let h = 1.0 / resolution as f64;
    let lin_w = params.theta * (params.k as f64 - 1.0);
    let quad_w = 1.0 - params.theta;

    struct Grid<'a> {
        w: &'a [Vec<f64>],
        c: &'a [f64],
        lambda: f64,
        lin_w: f64,
        quad_w: f64,
        h: f64,
        m: usize,
        levels: Vec<usize>,
        best: (f64, Vec<usize>),
        points: u64,
    }
    impl Grid<'_> {
        fn walk(&mut self, i: usize, remaining: usize, lin: f64, quad: f64) {
            let n = self.c.len();
            if i + 1 == n {
                if remaining > self.m {
                    return;
                }
                self.levels.push(remaining);
                let (l, q) = self.extend(i, remaining, lin, quad);
                self.levels.pop();
                let value = self.lin_w * l + self.quad_w * q;
                self.points += 1;
                if value > self.best.0 {
                    let mut lv = self.levels.clone();
                    lv.push(remaining);
                    self.best = (value, lv);
                }
                return;
            }
            let slots_after = (n - i - 1) * self.m;
            let lo = remaining.saturating_sub(slots_after);
            let hi = remaining.min(self.m);
            for a in lo..=hi {
                let (l, q) = self.extend(i, a, lin, quad);
                self.levels.push(a);
                self.walk(i + 1, remaining - a, l, q);
                self.levels.pop();
            }
        }

        /// Adds coordinate `i` at level `a` to the running linear and
        /// quadratic parts; `levels` holds coordinates `0..i`.
        fn extend(&self, i: usize, a: usize, lin: f64, quad: f64) -> (f64, f64) {
            if a == 0 {
                return (lin, quad);
            }
            let xi = a as f64 * self.h;
            let cross: f64 = self.levels[..i]
                .iter()
                .enumerate()
                .map(|(j, &aj)| self.w[i][j] * aj as f64 * self.h)
                .sum();
            (
                lin + self.c[i] * xi,
                quad + (self.lambda - self.w[i][i]) * xi * xi - 2.0 * xi * cross,
            )
        }
    }

    let mut g = Grid {
        w: &w,
        c,
        lambda: params.lambda,
        lin_w,
        quad_w,
        h,
        m: resolution,
        levels: Vec::with_capacity(n),
        best: (f64::NEG_INFINITY, Vec::new()),
        points: 0,
    };
    g.walk(0, total, 0.0, 0.0);
    let argmax = g.best.1.iter().map(|&a| a as f64 * h).collect();
    Ok(GridSearch {
        grid_max: g.best.0,
        argmax,
        integral_optimum: integral.best_value,
        points: g.points,
    })
}

/// Relaxed grid maximum minus the integral optimum; at most float noise
/// when the relaxation is tight.
pub fn tightness_gap(
    pool: &EmbeddingMatrix,
    c: &[f64],
    params: &SelectParams,
    resolution: usize,
) -> Result<f64> {
    grid_search_relaxation(pool, c, params, resolution).map(|g| g.gap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fw::top_k_indices;
    use crate::instances::{clustered_pool, random_pool, random_relevance};
    use crate::objective::eval_objective;
    use crate::model::SelectionVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomials() {
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(40, 20), 137_846_528_820);
    }

    #[test]
    fn full_set_and_linear_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = random_pool(&mut rng, 6, 3);
        let c = random_relevance(&mut rng, &pool);
        let r = brute_force_ccbqp(&pool, &c, &SelectParams::new(6, 0.4)).unwrap();
        assert_eq!(r.best_set, (0..6).collect::<Vec<_>>());
        let r = brute_force_ccbqp(&pool, &c, &SelectParams::new(3, 1.0)).unwrap();
        assert_eq!(r.best_set, top_k_indices(&c, 3));
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pool = clustered_pool(&mut rng, 8, 4, 3, 0.5);
        let c = random_relevance(&mut rng, &pool);
        let p = SelectParams::new(3, 0.5);
        let r = brute_force_ccbqp_with_table(&pool, &c, &p).unwrap();
        let table = r.value_table.unwrap();
        assert_eq!(table.len(), 56);
        for (set, value) in &table {
            let x = SelectionVector::indicator(8, set);
            let direct = eval_objective(&pool, &c, x.as_slice(), &p);
            assert!((direct - value).abs() < 1e-10);
        }
        assert!(r.local_maxima.contains(&r.best_set));
    }

    #[test]
    fn guard_rejects_large_enumerations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pool = random_pool(&mut rng, 60, 3);
        let c = random_relevance(&mut rng, &pool);
        assert!(matches!(
            brute_force_ccbqp(&pool, &c, &SelectParams::new(10, 0.5)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn tight_at_lambda_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let pool = random_pool(&mut rng, 4, 3);
            let c = random_relevance(&mut rng, &pool);
            for theta in [0.0, 0.5] {
                let gap = tightness_gap(&pool, &c, &SelectParams::new(2, theta), 20).unwrap();
                assert!(gap <= 1e-9, "gap {gap}");
            }
        }
    }

    #[test]
    fn loose_without_the_shift() {
        let pool = EmbeddingMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.999, 0.04, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let c = [0.9, 0.89, 0.2, 0.1];
        let p = SelectParams::new(2, 0.3).with_lambda(0.0).allowing_small_lambda();
        assert!(tightness_gap(&pool, &c, &p, 20).unwrap() > 1e-3);
    }

    #[test]
    fn grid_count_small() {
        // compositions of 2 into 3 parts each <= 1
        assert_eq!(grid_count(3, 1, 2), 3);
        assert_eq!(grid_count(2, 2, 2), 3);
    }
}
