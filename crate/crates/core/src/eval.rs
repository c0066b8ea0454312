//! Ranked-retrieval metrics, evaluation runs and latency scaling.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{EmbeddingMatrix, Qrels};
use crate::retrieval::{FrozenTree, Method, PathSumOptions, Retriever};
use crate::synth::{gaussian_clusters, ClusterSpec};
use crate::tree::{build_tree, BuildConfig};

pub const WARMUP_QUERIES: usize = 10;

/// How a relevance grade turns into DCG gain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `grade`
    #[default]
    Linear,
    /// `2^grade - 1`
    Exponential,
}

impl std::str::FromStr for Gain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Gain::Linear),
            "exponential" | "exp" => Ok(Gain::Exponential),
            other => Err(Error::Validation(format!("unknown gain `{other}`"))),
        }
    }
}

impl Gain {
    fn of(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

fn no_relevant() -> Error {
    Error::Validation("metric needs at least one relevant document".into())
}

/// First occurrences of the top `k` ids; repeated ids in a ranking are ignored.
fn top_k<S: AsRef<str>>(ranking: &[S], k: usize) -> impl Iterator<Item = (usize, &str)> {
    let mut seen = HashSet::new();
    ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, s)| (i, s.as_ref()))
        .filter(move |&(_, s)| seen.insert(s))
}

/// `|top-k ∩ relevant| / |relevant|`.
pub fn recall_at_k<S: AsRef<str>>(ranking: &[S], relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(no_relevant());
    }
    let hits = top_k(ranking, k).filter(|(_, d)| relevant.contains(d)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Reciprocal rank of the first relevant document in the top `k`, else 0.
pub fn mrr_at_k<S: AsRef<str>>(ranking: &[S], relevant: &HashSet<&str>, k: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(no_relevant());
    }
    Ok(top_k(ranking, k)
        .find(|(_, d)| relevant.contains(d))
        .map_or(0.0, |(i, _)| 1.0 / (i + 1) as f64))
}

/// DCG over the top `k` divided by the DCG of the grade-sorted ideal ranking.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranking: &[S],
    grades: &BTreeMap<String, u32>,
    k: usize,
    gain: Gain,
) -> Result<f64> {
    let mut ideal: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Err(no_relevant());
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = top_k(ranking, k)
        .map(|(i, d)| gain.of(grades.get(d).copied().unwrap_or(0)) / discount(i))
        .sum();
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.of(g) / discount(i))
        .sum();
    Ok(dcg / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffMetrics {
    pub recall: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over per-query wall-clock times.
    pub fn from_millis(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let pct = |p: f64| sorted[((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Some(Self {
            mean_ms: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_ms: pct(50.0),
            p95_ms: pct(95.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub gain: Gain,
    pub query_count: usize,
    pub per_cutoff: BTreeMap<usize, CutoffMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width table with one row per cutoff.
    pub fn render_table(&self) -> String {
        let mut out = format!("method: {}  queries: {}\n", self.method, self.query_count);
        let _ = writeln!(out, "{:>6}  {:>8}  {:>8}  {:>8}", "k", "Recall", "MRR", "nDCG");
        for (k, m) in &self.per_cutoff {
            let _ = writeln!(
                out,
                "{:>6}  {:>8.2}  {:>8.2}  {:>8.2}",
                format!("@{k}"),
                100.0 * m.recall,
                100.0 * m.mrr,
                100.0 * m.ndcg
            );
        }
        if let Some(l) = &self.latency {
            let _ = writeln!(
                out,
                "latency ms: mean {:.3}  p50 {:.3}  p95 {:.3}",
                l.mean_ms, l.p50_ms, l.p95_ms
            );
        }
        out
    }
}

fn check_cutoffs(cutoffs: &[usize]) -> Result<Vec<usize>> {
    let mut ks = cutoffs.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::Validation("cutoffs must be a non-empty list of positive integers".into()));
    }
    Ok(ks)
}

/// Averages metrics over every qrels query, using the supplied rankings.
///
/// A qrels query with no ranking counts as an empty ranking.
pub fn evaluate_rankings(
    rankings: &BTreeMap<String, Vec<String>>,
    qrels: &Qrels,
    cutoffs: &[usize],
    gain: Gain,
) -> Result<BTreeMap<usize, CutoffMetrics>> {
    let ks = check_cutoffs(cutoffs)?;
    let empty = Vec::new();
    let mut sums: BTreeMap<usize, CutoffMetrics> = ks
        .iter()
        .map(|&k| (k, CutoffMetrics { recall: 0.0, mrr: 0.0, ndcg: 0.0 }))
        .collect();
    for q in qrels.query_ids() {
        let ranking = rankings.get(q).unwrap_or(&empty);
        let relevant = qrels.relevant(q);
        let grades = qrels.grades(q).expect("query comes from qrels");
        for (&k, m) in sums.iter_mut() {
            m.recall += recall_at_k(ranking, &relevant, k)?;
            m.mrr += mrr_at_k(ranking, &relevant, k)?;
            m.ndcg += ndcg_at_k(ranking, grades, k, gain)?;
        }
    }
    let n = qrels.len().max(1) as f64;
    for m in sums.values_mut() {
        m.recall /= n;
        m.mrr /= n;
        m.ndcg /= n;
    }
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub gain: Gain,
    /// Time each query; off gives byte-stable reports.
    pub measure_latency: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            gain: Gain::Linear,
            measure_latency: true,
        }
    }
}

/// Retrieves `max(cutoffs)` results for every qrels query and scores them.
///
/// Queries present in the embeddings but absent from qrels are skipped.
/// When timing, the first [`WARMUP_QUERIES`] queries are run once untimed
/// before every query is timed individually.
pub fn run_eval(
    retriever: &Retriever<'_>,
    queries: &EmbeddingMatrix,
    qrels: &Qrels,
    cutoffs: &[usize],
    options: EvalOptions,
) -> Result<EvalReport> {
    let ks = check_cutoffs(cutoffs)?;
    let k = *ks.last().expect("non-empty");
    let index = queries.id_index();
    let missing: Vec<String> = qrels
        .query_ids()
        .filter(|q| !index.contains_key(q))
        .map(str::to_owned)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingQueries(missing));
    }
    if queries.dim() != retriever.dim() {
        return Err(Error::Shape {
            expected: retriever.dim(),
            got: queries.dim(),
        });
    }

    let rows: Vec<(&str, usize)> = qrels.query_ids().map(|q| (q, index[q])).collect();
    if options.measure_latency {
        for &(_, r) in rows.iter().take(WARMUP_QUERIES) {
            std::hint::black_box(retriever.retrieve(queries.row(r), k)?);
        }
    }

    let mut rankings = BTreeMap::new();
    let mut millis = Vec::with_capacity(rows.len());
    for &(q, r) in &rows {
        let start = Instant::now();
        let result = retriever.retrieve(queries.row(r), k)?;
        millis.push(start.elapsed().as_secs_f64() * 1e3);
        rankings.insert(q.to_owned(), result.entries.into_iter().map(|e| e.doc_id).collect());
    }

    Ok(EvalReport {
        method: retriever.method(),
        gain: options.gain,
        query_count: rows.len(),
        per_cutoff: evaluate_rankings(&rankings, qrels, &ks, options.gain)?,
        latency: if options.measure_latency {
            LatencyStats::from_millis(&millis)
        } else {
            None
        },
    })
}

/// Mean per-query latency of one method on one tree or corpus.
pub fn mean_query_millis(retriever: &Retriever<'_>, queries: &EmbeddingMatrix, k: usize, trials: usize) -> Result<f64> {
    for row in queries.rows().take(WARMUP_QUERIES) {
        std::hint::black_box(retriever.retrieve(row, k)?);
    }
    let trials = trials.max(1);
    let start = Instant::now();
    for _ in 0..trials {
        for row in queries.rows() {
            std::hint::black_box(retriever.retrieve(row, k)?);
        }
    }
    let n = (trials * queries.count()).max(1);
    Ok(start.elapsed().as_secs_f64() * 1e3 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub dim: usize,
    pub n_clusters: usize,
    pub n_queries: usize,
    pub sigma: f64,
    pub k: usize,
    /// Pop budget for best-first search; `None` uses the default heuristic.
    pub n_max: Option<usize>,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1000],
            methods: vec![Method::Dot, Method::PathSum, Method::Bfs],
            trials: 3,
            dim: 32,
            n_clusters: 20,
            n_queries: 100,
            sigma: 0.3,
            k: 10,
            n_max: None,
            variance_floor: crate::tree::DEFAULT_VARIANCE_FLOOR,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub method: Method,
    pub mean_ms: f64,
}

/// Mean query latency per (size, method) on synthetic cluster corpora, sizes ascending.
pub fn bench_scaling(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let mut rows = Vec::new();
    for size in sizes {
        let set = gaussian_clusters(&ClusterSpec {
            n_clusters: config.n_clusters,
            dim: config.dim,
            n_docs: size,
            n_queries: config.n_queries,
            sigma: config.sigma,
            seed: config.seed,
        })?;
        let needs_tree = config.methods.iter().any(|&m| m != Method::Dot);
        let frozen = if needs_tree {
            let tree = build_tree(
                &set.corpus,
                &BuildConfig {
                    variance_floor: config.variance_floor,
                    shuffle_seed: None,
                },
            )?;
            Some(FrozenTree::new(&tree))
        } else {
            None
        };
        for &method in &config.methods {
            let retriever = match method {
                Method::Dot => Retriever::Dot { corpus: &set.corpus },
                Method::PathSum => Retriever::PathSum {
                    tree: frozen.as_ref().expect("tree built"),
                    options: PathSumOptions::default(),
                },
                Method::Bfs => Retriever::Bfs {
                    tree: frozen.as_ref().expect("tree built"),
                    n_max: config.n_max,
                },
            };
            let mean_ms = mean_query_millis(&retriever, &set.queries, config.k, config.trials)?;
            log::info!("bench size={size} method={method} mean_ms={mean_ms:.4}");
            rows.push(BenchRow { size, method, mean_ms });
        }
    }
    Ok(rows)
}

/// `size<TAB>method<TAB>mean_ms` with a header line.
pub fn bench_tsv(rows: &[BenchRow]) -> String {
    let mut out = String::from("size\tmethod\tmean_ms\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{:.6}", r.size, r.method, r.mean_ms);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set<'a>(ids: &[&'a str]) -> HashSet<&'a str> {
        ids.iter().copied().collect()
    }

    fn grades(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|&(d, g)| (d.to_owned(), g)).collect()
    }

    #[test]
    fn recall_examples() {
        let r = ["d3", "d1", "d2"];
        assert_eq!(recall_at_k(&r, &set(&["d3"]), 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&r, &set(&["d3", "d4"]), 5).unwrap(), 0.5);
        assert_eq!(recall_at_k(&["d1", "d2"], &set(&["d3"]), 5).unwrap(), 0.0);
        assert!(recall_at_k(&r, &set(&[]), 5).is_err());
    }

    #[test]
    fn mrr_examples() {
        let r = ["a", "b", "c", "d3", "e"];
        assert!((mrr_at_k(&r, &set(&["d3"]), 5).unwrap() - 0.25).abs() < 1e-9);
        assert_eq!(mrr_at_k(&r, &set(&["a"]), 5).unwrap(), 1.0);
        assert_eq!(mrr_at_k(&r, &set(&["d3"]), 3).unwrap(), 0.0);
        assert!(mrr_at_k(&r, &set(&[]), 5).is_err());
    }

    #[test]
    fn ndcg_examples() {
        let g = grades(&[("d1", 1)]);
        assert_eq!(ndcg_at_k(&["d1", "x"], &g, 5, Gain::Linear).unwrap(), 1.0);
        let v = ndcg_at_k(&["x", "d1"], &g, 5, Gain::Linear).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);

        let g = grades(&[("d1", 2), ("d2", 1)]);
        let v = ndcg_at_k(&["d2", "d1"], &g, 2, Gain::Linear).unwrap();
        let expected = (1.0 + 2.0 / 3f64.log2()) / (2.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.85972).abs() < 1e-5);

        assert!(ndcg_at_k(&["d1"], &grades(&[("d1", 0)]), 5, Gain::Linear).is_err());
    }

    #[test]
    fn exponential_gain() {
        let g = grades(&[("d1", 2), ("d2", 1)]);
        let v = ndcg_at_k(&["d2", "d1"], &g, 2, Gain::Exponential).unwrap();
        let expected = (1.0 + 3.0 / 3f64.log2()) / (3.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn ideal_ranking_is_exactly_one() {
        let g = grades(&[("a", 3), ("b", 1), ("c", 3), ("d", 2), ("z", 0)]);
        for order in [["a", "c", "d", "b"], ["c", "a", "d", "b"]] {
            assert_eq!(ndcg_at_k(&order, &g, 10, Gain::Linear).unwrap(), 1.0);
            assert_eq!(ndcg_at_k(&order, &g, 2, Gain::Exponential).unwrap(), 1.0);
        }
    }

    #[test]
    fn repeated_ids_count_once() {
        let g = grades(&[("a", 1), ("b", 1)]);
        let v = ndcg_at_k(&["a", "a", "a"], &g, 3, Gain::Linear).unwrap();
        assert!(v < 1.0);
        assert_eq!(recall_at_k(&["a", "a"], &set(&["a", "b"]), 2).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_two_queries_mrr() {
        let qrels = Qrels::from_entries([("q1", "a", 1), ("q2", "b", 1)]).unwrap();
        let mut rankings = BTreeMap::new();
        rankings.insert("q1".to_owned(), vec!["a".to_owned(), "b".to_owned()]);
        rankings.insert("q2".to_owned(), vec!["a".to_owned(), "b".to_owned()]);
        let m = evaluate_rankings(&rankings, &qrels, &[5, 1], Gain::Linear).unwrap();
        assert_eq!(m[&5].mrr, 0.75);
        assert_eq!(m[&1].recall, 0.5);
        assert_eq!(m[&5].recall, 1.0);
        assert!(evaluate_rankings(&rankings, &qrels, &[], Gain::Linear).is_err());
        assert!(evaluate_rankings(&rankings, &qrels, &[0, 5], Gain::Linear).is_err());
    }

    #[test]
    fn latency_percentiles() {
        let s: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let l = LatencyStats::from_millis(&s).unwrap();
        assert_eq!((l.mean_ms, l.p50_ms, l.p95_ms), (50.5, 50.0, 95.0));
        assert!(LatencyStats::from_millis(&[]).is_none());
    }

    #[test]
    fn run_eval_reports_missing_queries() {
        let corpus = EmbeddingMatrix::new(1, vec![0.0, 1.0], vec!["a".into(), "b".into()]).unwrap();
        let queries = EmbeddingMatrix::new(1, vec![1.0], vec!["q1".into()]).unwrap();
        let qrels = Qrels::from_entries([("q1", "b", 1), ("q9", "a", 1), ("q7", "a", 1)]).unwrap();
        let r = Retriever::Dot { corpus: &corpus };
        match run_eval(&r, &queries, &qrels, &[1], EvalOptions::default()) {
            Err(Error::MissingQueries(ids)) => assert_eq!(ids, vec!["q7", "q9"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn run_eval_perfect_single_query() {
        let corpus = EmbeddingMatrix::new(1, vec![-1.0, 1.0], vec!["a".into(), "b".into()]).unwrap();
        let queries = EmbeddingMatrix::new(1, vec![1.0], vec!["q1".into()]).unwrap();
        let qrels = Qrels::from_entries([("q1", "b", 1)]).unwrap();
        let r = Retriever::Dot { corpus: &corpus };
        let report = run_eval(&r, &queries, &qrels, &[1, 5], EvalOptions::default()).unwrap();
        assert_eq!(report.query_count, 1);
        for m in report.per_cutoff.values() {
            assert_eq!((m.recall, m.mrr, m.ndcg), (1.0, 1.0, 1.0));
        }
        assert!(report.latency.is_some());
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["per_cutoff"]["5"]["recall"], 1.0);
        assert!(report.render_table().contains("@5"));
    }

    #[test]
    fn bench_single_dot_row() {
        let rows = bench_scaling(&BenchConfig {
            sizes: vec![1000],
            methods: vec![Method::Dot],
            trials: 1,
            n_queries: 20,
            ..BenchConfig::default()
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].size, 1000);
        assert!(rows[0].mean_ms > 0.0);
        assert_eq!(bench_tsv(&rows).lines().count(), 2);
    }

    #[test]
    fn bench_scaling_is_sorted_and_roughly_linear() {
        let rows = bench_scaling(&BenchConfig {
            // Working sets stay inside L2 so the band measures scaling, not cache cliffs.
            sizes: vec![8000, 2000, 4000],
            methods: vec![Method::Dot, Method::PathSum],
            trials: 5,
            dim: 32,
            n_queries: 100,
            ..BenchConfig::default()
        })
        .unwrap();
        let sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
        assert_eq!(sizes, vec![2000, 2000, 4000, 4000, 8000, 8000]);
        for method in [Method::Dot, Method::PathSum] {
            let ms: Vec<f64> = rows.iter().filter(|r| r.method == method).map(|r| r.mean_ms).collect();
            for w in ms.windows(2) {
                assert!(w[1] <= 3.0 * w[0], "{method}: {ms:?}");
            }
        }
    }

    #[test]
    fn pathsum_beats_bfs_at_ten_thousand() {
        let rows = bench_scaling(&BenchConfig {
            sizes: vec![10_000],
            methods: vec![Method::PathSum, Method::Bfs],
            trials: 1,
            dim: 64,
            n_queries: 30,
            n_max: Some(usize::MAX),
            ..BenchConfig::default()
        })
        .unwrap();
        assert!(rows[0].mean_ms < rows[1].mean_ms, "{rows:?}");
    }
}
