//! Synthetic clustered corpora with near-duplicate items.
//!
//! Items are organised in three levels: cluster centroids, base items
//! scattered around each centroid, and `redundancy` near-copies of every
//! base item. A query sits near the midpoint of one base item from each of a
//! few clusters and those base items form its gold set, so a selection has
//! to cover several clusters, and pick the original rather than a copy, to
//! reach full recall.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EmbeddingMatrix, QueryContext};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    /// Copies per base item, the original included.
    pub redundancy: usize,
    pub queries: usize,
    /// Clusters mixed into each query; also the gold-set size.
    pub relevant_per_query: usize,
    /// Norm of the offset of a base item from its centroid.
    pub spread: f64,
    /// Norm of the offset of a copy from its base item.
    pub duplicate_noise: f64,
    /// Norm of the offset of a query from the midpoint of its gold items.
    pub query_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            d: 256,
            clusters: 100,
            redundancy: 20,
            queries: 200,
            relevant_per_query: 5,
            spread: 0.6,
            duplicate_noise: 0.45,
            query_noise: 0.3,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("d", self.d),
            ("clusters", self.clusters),
            ("redundancy", self.redundancy),
            ("relevant_per_query", self.relevant_per_query),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParams(format!("{name} must be positive")));
        }
        if self.relevant_per_query > self.clusters {
            return Err(Error::InvalidParams(format!(
                "relevant_per_query {} exceeds clusters {}",
                self.relevant_per_query, self.clusters
            )));
        }
        if self.clusters * self.redundancy > self.n {
            return Err(Error::InvalidParams(format!(
                "n = {} cannot hold {} clusters of {} copies",
                self.n, self.clusters, self.redundancy
            )));
        }
        for (name, v) in [
            ("spread", self.spread),
            ("duplicate_noise", self.duplicate_noise),
            ("query_noise", self.query_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub pool: EmbeddingMatrix,
    /// Cluster of every item.
    pub cluster_of: Vec<usize>,
    /// Base item every copy descends from.
    pub group_of: Vec<usize>,
    /// Query embeddings, one row per query.
    pub query_pool: EmbeddingMatrix,
    /// Relevance and gold set per query, ids `q0000`, `q0001`, ...
    pub queries: Vec<QueryContext>,
}

fn unit(v: &mut [f64]) {
    let norm = linalg::norm_sq_f64(v).sqrt().max(1e-300);
    v.iter_mut().for_each(|x| *x /= norm);
}

/// `base + scale * u` for a uniformly random unit direction `u`, normalized.
fn perturbed(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..base.len()).map(|_| StandardNormal.sample(rng)).collect();
    unit(&mut dir);
    let mut out: Vec<f64> = base.iter().zip(&dir).map(|(b, u)| b + scale * u).collect();
    unit(&mut out);
    out
}

/// Generates a corpus; the same config always yields the same bits.
pub fn synth_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let SynthConfig { n, d, clusters, .. } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let origin = vec![0.0; d];
    let centroids: Vec<Vec<f64>> = (0..clusters).map(|_| perturbed(&mut rng, &origin, 1.0)).collect();

    // Base items are dealt round-robin over clusters; the last group may be short.
    let groups = n.div_ceil(config.redundancy);
    let mut data = Vec::with_capacity(n * d);
    let mut cluster_of = Vec::with_capacity(n);
    let mut group_of = Vec::with_capacity(n);
    for g in 0..groups {
        let cluster = g % clusters;
        let base = perturbed(&mut rng, &centroids[cluster], config.spread);
        let copies = config.redundancy.min(n - g * config.redundancy);
        for c in 0..copies {
            let row = if c == 0 {
                base.clone()
            } else {
                perturbed(&mut rng, &base, config.duplicate_noise)
            };
            data.extend(row.iter().map(|&x| x as f32));
            cluster_of.push(cluster);
            group_of.push(g);
        }
    }
    let pool = EmbeddingMatrix::from_flat(n, d, data)?;

    let mut query_rows = Vec::with_capacity(config.queries * d);
    let mut queries = Vec::with_capacity(config.queries);
    for q in 0..config.queries {
        let mut chosen = sample(&mut rng, clusters, config.relevant_per_query).into_vec();
        chosen.sort_unstable();
        // The query sits near the midpoint of one base item per chosen
        // cluster; those base items are its gold evidence.
        let mut mid = vec![0.0; d];
        let mut gold = Vec::with_capacity(chosen.len());
        for &c in &chosen {
            let in_cluster = (groups - c).div_ceil(clusters);
            let g = c + clusters * rng.random_range(0..in_cluster);
            let anchor = g * config.redundancy;
            mid.iter_mut().zip(pool.row(anchor)).for_each(|(m, &x)| *m += x as f64);
            gold.push(anchor);
        }
        unit(&mut mid);
        let query: Vec<f32> = perturbed(&mut rng, &mid, config.query_noise)
            .iter()
            .map(|&x| x as f32)
            .collect();
        query_rows.extend_from_slice(&query);
        gold.sort_unstable();
        queries.push(QueryContext::from_query(&pool, format!("q{q:04}"), query, Some(gold))?);
    }
    let query_pool = EmbeddingMatrix::from_flat(config.queries, d, query_rows)?;
    Ok(SynthCorpus {
        config: config.clone(),
        pool,
        cluster_of,
        group_of,
        query_pool,
        queries,
    })
}
