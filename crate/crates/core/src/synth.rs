//! Seeded isotropic Gaussian cluster corpora for tests, benchmarks and fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::{EmbeddingMatrix, Qrels};

/// Centers are drawn from `N(0, I)`; each point is its center plus `N(0, sigma^2 I)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub n_clusters: usize,
    pub dim: usize,
    pub n_docs: usize,
    pub n_queries: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// Corpus, fresh queries and same-cluster relevance judgments.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub corpus: EmbeddingMatrix,
    pub queries: EmbeddingMatrix,
    pub qrels: Qrels,
    pub centers: Vec<Vec<f32>>,
    /// Cluster of each corpus row.
    pub labels: Vec<usize>,
}

pub fn doc_id(i: usize) -> String {
    format!("d{i:06}")
}

pub fn query_id(j: usize) -> String {
    format!("q{j:05}")
}

/// Row `i` belongs to cluster `i % n_clusters`, so clusters arrive interleaved.
///
/// The corpus only depends on `(n_clusters, dim, n_docs, sigma, seed)`, so
/// changing the query count leaves the documents untouched.
pub fn gaussian_clusters(spec: &ClusterSpec) -> Result<SyntheticSet> {
    if spec.n_clusters == 0 || spec.dim == 0 {
        return Err(Error::Validation("need at least one cluster and one dimension".into()));
    }
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(Error::Validation(format!("bad sigma {}", spec.sigma)));
    }
    if spec.n_queries > 0 && spec.n_docs < spec.n_clusters.min(spec.n_queries) {
        return Err(Error::Validation("some queried cluster would have no documents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f32>> = (0..spec.n_clusters)
        .map(|_| (0..spec.dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect())
        .collect();
    let sample = |rng: &mut ChaCha8Rng, c: usize, out: &mut Vec<f32>| {
        for &m in &centers[c] {
            out.push((m as f64 + spec.sigma * rng.sample::<f64, _>(StandardNormal)) as f32);
        }
    };

    let mut docs = Vec::with_capacity(spec.n_docs * spec.dim);
    let labels: Vec<usize> = (0..spec.n_docs).map(|i| i % spec.n_clusters).collect();
    for &c in &labels {
        sample(&mut rng, c, &mut docs);
    }
    let mut queries = Vec::with_capacity(spec.n_queries * spec.dim);
    for j in 0..spec.n_queries {
        sample(&mut rng, j % spec.n_clusters, &mut queries);
    }

    let corpus = EmbeddingMatrix::new(spec.dim, docs, (0..spec.n_docs).map(doc_id).collect())?;
    let query_ids: Vec<String> = (0..spec.n_queries).map(query_id).collect();
    let qrels = Qrels::from_entries(query_ids.iter().enumerate().flat_map(|(j, q)| {
        let c = j % spec.n_clusters;
        labels
            .iter()
            .enumerate()
            .filter(move |&(_, &l)| l == c)
            .map(move |(i, _)| (q.clone(), doc_id(i), 1u32))
    }))?;
    let queries = EmbeddingMatrix::new(spec.dim, queries, query_ids)?;
    Ok(SyntheticSet {
        corpus,
        queries,
        qrels,
        centers,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ClusterSpec {
        ClusterSpec {
            n_clusters: 4,
            dim: 3,
            n_docs: 40,
            n_queries: 8,
            sigma: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn shapes_and_qrels() {
        let s = gaussian_clusters(&spec()).unwrap();
        assert_eq!((s.corpus.count(), s.corpus.dim()), (40, 3));
        assert_eq!(s.queries.count(), 8);
        assert_eq!(s.qrels.len(), 8);
        let rel = s.qrels.relevant("q00001");
        assert_eq!(rel.len(), 10);
        assert!(rel.contains("d000001") && rel.contains("d000005"));
    }

    #[test]
    fn points_stay_near_their_centers() {
        let s = gaussian_clusters(&spec()).unwrap();
        for (i, row) in s.corpus.rows().enumerate() {
            let c = &s.centers[s.labels[i]];
            let d2: f32 = row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(d2.sqrt() < 1.0);
        }
    }

    #[test]
    fn seeded_and_query_count_independent() {
        let a = gaussian_clusters(&spec()).unwrap();
        let b = gaussian_clusters(&spec()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.queries, b.queries);
        let more = gaussian_clusters(&ClusterSpec { n_queries: 20, ..spec() }).unwrap();
        assert_eq!(a.corpus, more.corpus);
        let other = gaussian_clusters(&ClusterSpec { seed: 8, ..spec() }).unwrap();
        assert_ne!(a.corpus, other.corpus);
    }
}
