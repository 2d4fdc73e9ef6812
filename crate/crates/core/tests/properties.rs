mod common;

use dksel::baselines::{select_dpp_greedy, select_mmr, select_topk};
use dksel::instances::{random_feasible, random_pool, random_relevance};
use dksel::metrics::{ilad, jaccard, pareto_sweep, recall_at_k};
use dksel::objective::eval_objective;
use dksel::synth::{synth_corpus, SynthConfig};
use dksel::{solve_fw, EmbeddingMatrix, Method, QueryContext, SelectParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, n: usize, d: usize) -> (EmbeddingMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = random_pool(&mut rng, n, d);
    let c = random_relevance(&mut rng, &pool);
    (pool, c)
}

/// Reorders pool rows and relevance by `perm`: new item `i` is old item `perm[i]`.
fn permuted(pool: &EmbeddingMatrix, c: &[f64], perm: &[usize]) -> (EmbeddingMatrix, Vec<f64>) {
    (pool.subset(perm), perm.iter().map(|&i| c[i]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fw_output_is_integral_and_feasible(seed in any::<u64>(), n in 3usize..60, kf in 0.0f64..1.0, theta in 0.0f64..=1.0) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let (pool, c) = instance(seed, n, 6);
        let r = solve_fw(&pool, &c, &SelectParams::new(k, theta), None).unwrap();
        prop_assert!(r.integral);
        prop_assert_eq!(r.selected.len(), k);
        prop_assert!(r.selected.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.selected.iter().all(|&i| i < n));
    }

    #[test]
    fn fw_never_ends_below_its_start(seed in any::<u64>(), n in 4usize..60, theta in 0.0f64..1.0) {
        let k = n / 2;
        let (pool, c) = instance(seed, n, 5);
        let p = SelectParams::new(k, theta);
        let r = solve_fw(&pool, &c, &p, None).unwrap();
        let start = common::vertex_objective(&pool, &c, &select_topk(&c, k).unwrap().selected, &p);
        prop_assert!(r.objective >= start - 1e-9 * start.abs().max(1.0));
    }

    #[test]
    fn relabeling_the_pool_relabels_the_selection(seed in any::<u64>(), n in 4usize..40, theta in 0.05f64..0.95) {
        let k = 1 + n / 3;
        let (pool, c) = instance(seed, n, 6);
        let mut perm: Vec<usize> = (0..n).rev().collect();
        perm.rotate_left(seed as usize % n);
        let (pool2, c2) = permuted(&pool, &c, &perm);
        for method in [Method::Fw, Method::Mmr, Method::Dpp, Method::TopK] {
            let p = SelectParams::new(k, theta);
            let a = method.select(&pool, &c, &p).unwrap();
            let b = method.select(&pool2, &c2, &p).unwrap();
            let mut mapped: Vec<usize> = b.selected.iter().map(|&i| perm[i]).collect();
            mapped.sort_unstable();
            // generic instances have no ties, so the tie rule never decides
            prop_assert_eq!(&mapped, &a.selected, "{}", method);
        }
    }

    #[test]
    fn ilad_ignores_order_and_pool_reindexing(seed in any::<u64>(), n in 3usize..40) {
        let (pool, _) = instance(seed, n, 8);
        let sel: Vec<usize> = (0..n).filter(|i| (i * 7 + seed as usize) % 3 == 0).collect();
        prop_assume!(sel.len() >= 2);
        let base = ilad(&pool, &sel).unwrap();
        let mut rev = sel.clone();
        rev.reverse();
        prop_assert!((ilad(&pool, &rev).unwrap() - base).abs() < 1e-12);
        let perm: Vec<usize> = (0..n).rev().collect();
        let (pool2, _) = permuted(&pool, &vec![0.0; n], &perm);
        let sel2: Vec<usize> = sel.iter().map(|&i| n - 1 - i).collect();
        prop_assert!((ilad(&pool2, &sel2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_reference(seed in any::<u64>(), n in 2usize..30, theta in 0.0f64..=1.0, lambda in 2.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = random_pool(&mut rng, n, 4);
        let c = random_relevance(&mut rng, &pool);
        let k = 1 + n / 2;
        let x = random_feasible(&mut rng, n, k);
        let p = SelectParams::new(k, theta).with_lambda(lambda);
        let f = eval_objective(&pool, &c, &x, &p);
        let reference = common::objective(&pool, &c, &x, &p);
        prop_assert!((f - reference).abs() <= 1e-10 * reference.abs().max(1.0));
    }

    #[test]
    fn baselines_return_k_distinct_items(seed in any::<u64>(), n in 1usize..50, kf in 0.0f64..1.0, theta in 0.0f64..=1.0) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let (pool, c) = instance(seed, n, 3);
        for sel in [
            select_mmr(&pool, &c, k, theta).unwrap().0.selected,
            select_dpp_greedy(&pool, &c, k, theta).unwrap().0.selected,
            select_topk(&c, k).unwrap().selected,
        ] {
            prop_assert_eq!(sel.len(), k);
            prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn sweep_has_one_record_per_theta_for_one_query() {
    let (pool, c) = instance(5, 30, 4);
    let q = QueryContext::from_relevance("only", c, Some(vec![0, 1, 2])).unwrap();
    let thetas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let recs = pareto_sweep(&pool, &[q], &[Method::Fw], &thetas, &SelectParams::new(4, 0.5)).unwrap();
    assert_eq!(recs.len(), 5);
    assert!(recs.iter().zip(thetas).all(|(r, t)| r.theta == t && !r.failed()));
}

#[test]
fn sweep_marks_failures_instead_of_aborting() {
    let (pool, c) = instance(6, 20, 4);
    let good = QueryContext::from_relevance("a", c.clone(), Some(vec![3])).unwrap();
    let no_gold = QueryContext::from_relevance("b", c, Some(vec![])).unwrap();
    let recs =
        pareto_sweep(&pool, &[good, no_gold], &[Method::Mmr], &[0.5], &SelectParams::new(3, 0.5)).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(!recs[0].failed());
    assert!(recs[1].failed() && recs[1].recall.is_nan());
    assert!(recs[1].error.as_deref().unwrap().contains("gold"));
}

#[test]
fn sweep_is_sorted_and_deterministic() {
    let s = synth_corpus(&SynthConfig {
        n: 2000,
        d: 32,
        clusters: 20,
        redundancy: 5,
        queries: 6,
        relevant_per_query: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let methods = [Method::TopK, Method::Fw, Method::Dpp];
    let a = pareto_sweep(&s.pool, &s.queries, &methods, &[0.7, 0.2], &SelectParams::new(6, 0.5)).unwrap();
    let b = pareto_sweep(&s.pool, &s.queries, &methods, &[0.7, 0.2], &SelectParams::new(6, 0.5)).unwrap();
    assert_eq!(a.len(), 3 * 2 * 6);
    let keys: Vec<(String, f64, String)> = a.iter().map(|r| (r.method.clone(), r.theta, r.query_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    assert_eq!(keys, sorted);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.recall, x.ilad, &x.selected), (y.recall, y.ilad, &y.selected));
    }
}

#[test]
fn high_theta_selections_approach_topk_on_low_redundancy_pools() {
    let s = synth_corpus(&SynthConfig {
        n: 5000,
        d: 64,
        clusters: 5000,
        redundancy: 1,
        queries: 30,
        relevant_per_query: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let k = 10;
    for method in [Method::Fw, Method::Mmr, Method::Dpp] {
        let mean: f64 = s
            .queries
            .iter()
            .map(|q| {
                let p = SelectParams::new(k, 0.9);
                let a = method.select(&s.pool, &q.relevance, &p).unwrap().selected;
                let b = select_topk(&q.relevance, k).unwrap().selected;
                jaccard(&a, &b)
            })
            .sum::<f64>()
            / s.queries.len() as f64;
        assert!(mean >= 0.8, "{method}: mean jaccard with top-k {mean:.3}");
    }
}

#[test]
fn random_subsets_of_an_unstructured_pool_are_nearly_orthogonal() {
    let s = synth_corpus(&SynthConfig {
        n: 3000,
        d: 128,
        clusters: 3000,
        redundancy: 1,
        queries: 1,
        relevant_per_query: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    // the ambient expectation of 1 - w for independent directions is 1
    let sel: Vec<usize> = (0..50).map(|i| i * 59).collect();
    let v = ilad(&s.pool, &sel).unwrap();
    assert!((v - 1.0).abs() < 0.02, "ilad {v}");
}

#[test]
fn recall_counts_only_gold_members() {
    assert_eq!(recall_at_k(&[0, 1, 2, 3, 4], &[4, 100]).unwrap(), 0.5);
}
