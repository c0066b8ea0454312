//! Ranking documents against a query vector.
//!
//! Tree methods score concept nodes with the collocation score. Under a
//! uniform prior over concepts the collocation score is a constant times
//! `p(x|c)^2`, so in log space it is `2 * log p(x|c)` up to an additive
//! constant that never changes a ranking and is dropped here.
//!
//! * Best-first search pops nodes from a max-priority queue keyed by score,
//!   emitting leaves in pop order until `k` leaves or `n_max` pops.
//! * Path-sum scores every internal node once and ranks each leaf by the sum
//!   of the scores of the internal nodes on its root-to-leaf path.
//! * The flat baseline ranks corpus rows by exact inner product.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::EmbeddingMatrix;
use crate::tree::{CobwebTree, ConceptNode, NodeId};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bfs,
    PathSum,
    Dot,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bfs => "bfs",
            Method::PathSum => "pathsum",
            Method::Dot => "dot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs" => Ok(Method::Bfs),
            "pathsum" => Ok(Method::PathSum),
            "dot" => Ok(Method::Dot),
            other => Err(Error::Validation(format!("unknown method `{other}`"))),
        }
    }
}

/// How many results to return and how many nodes best-first search may pop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryBudget {
    pub k: usize,
    pub n_max: usize,
}

impl QueryBudget {
    pub fn new(k: usize, n_max: usize) -> Result<Self> {
        if k == 0 || n_max == 0 {
            return Err(Error::Validation(format!(
                "budget needs k >= 1 and n_max >= 1 (got k={k}, n_max={n_max})"
            )));
        }
        Ok(Self { k, n_max })
    }

    pub fn with_default_n_max(k: usize, node_count: usize) -> Result<Self> {
        Self::new(k, default_n_max(k, node_count))
    }
}

/// `4 * k * ceil(log2(node_count + 1))`, at least 1.
pub fn default_n_max(k: usize, node_count: usize) -> usize {
    let levels = ((node_count + 1) as f64).log2().ceil() as usize;
    (4 * k * levels).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub method: Method,
    pub entries: Vec<ScoredDoc>,
    /// Root-to-leaf node ids for each entry, aligned with `entries`.
    pub paths: Option<Vec<Vec<NodeId>>>,
    /// Nodes popped by best-first search.
    pub expansions: Option<usize>,
}

impl RankedResult {
    fn empty(method: Method) -> Self {
        Self {
            method,
            entries: Vec::new(),
            paths: None,
            expansions: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }
}

/// `log N(x; mean, diag(var))`.
pub fn gaussian_log_likelihood(mean: &[f64], var: &[f64], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&m, &v), &xi) in mean.iter().zip(var).zip(x) {
        let d = xi - m;
        total += (2.0 * PI * v).ln() + d * d / v;
    }
    -0.5 * total
}

/// `log p(x | c)` for a node's diagonal Gaussian with the tree's variance floor.
pub fn log_likelihood(node: &ConceptNode, floor: f64, x: &[f64]) -> f64 {
    gaussian_log_likelihood(node.mean(), &node.stats().variance(floor), x)
}

/// Log collocation score with the concept-independent constant dropped.
pub fn collocation_logscore(node: &ConceptNode, floor: f64, x: &[f64]) -> f64 {
    2.0 * log_likelihood(node, floor, x)
}

/// `sum_d (x_d - mean_d)^2 * inv_var_d` in eight fixed accumulation lanes.
#[inline]
fn weighted_sq_dist(x: &[f32], mean: &[f32], inv_var: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let xs = x.chunks_exact(8);
    let ms = mean.chunks_exact(8);
    let ws = inv_var.chunks_exact(8);
    let (xr, mr, wr) = (xs.remainder(), ms.remainder(), ws.remainder());
    for ((xc, mc), wc) in xs.zip(ms).zip(ws) {
        for l in 0..8 {
            let d = xc[l] - mc[l];
            lanes[l] += d * d * wc[l];
        }
    }
    let mut tail = 0.0f32;
    for ((&a, &b), &w) in xr.iter().zip(mr).zip(wr) {
        let d = a - b;
        tail += d * d * w;
    }
    lanes.iter().sum::<f32>() + tail
}

#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let tail: f32 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    lanes.iter().sum::<f32>() + tail
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathSumOptions {
    /// Add the leaf's own score to its path score.
    pub include_leaf_score: bool,
    /// Divide the path score by the number of summed terms.
    pub depth_normalize: bool,
}

/// One node on an explained retrieval path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub node: NodeId,
    pub count: u64,
    pub score: f64,
}

/// Immutable, query-optimized copy of a tree.
///
/// Nodes are laid out breadth-first so that siblings are contiguous and every
/// parent precedes its children. Node statistics are stored as `f32` rows,
/// internal nodes first, so path-sum can score all internal nodes in one
/// sequential sweep.
#[derive(Debug, Clone)]
pub struct FrozenTree {
    dim: usize,
    node_ids: Vec<NodeId>,
    index_of: Vec<u32>,
    parent: Vec<u32>,
    child_start: Vec<u32>,
    child_len: Vec<u32>,
    depth: Vec<u32>,
    row: Vec<u32>,
    counts: Vec<u64>,
    leaf_doc: Vec<u32>,
    docs: Vec<String>,
    n_internal: usize,
    mean: Vec<f32>,
    inv_var: Vec<f32>,
    log_norm: Vec<f64>,
}

impl FrozenTree {
    pub fn new(tree: &CobwebTree) -> Self {
        let dim = tree.dim();
        let floor = tree.variance_floor();
        let mut order: Vec<NodeId> = Vec::with_capacity(tree.node_count());
        let mut parent = Vec::new();
        let mut depth = Vec::new();
        if let Some(root) = tree.root() {
            order.push(root);
            parent.push(NONE);
            depth.push(0);
        }
        let mut child_start = Vec::with_capacity(order.capacity());
        let mut child_len = Vec::with_capacity(order.capacity());
        let mut head = 0;
        while head < order.len() {
            let node = tree.node(order[head]);
            child_start.push(order.len() as u32);
            child_len.push(node.children().len() as u32);
            let d = depth[head] + 1;
            for &c in node.children() {
                order.push(c);
                parent.push(head as u32);
                depth.push(d);
            }
            head += 1;
        }

        let n = order.len();
        let mut index_of = vec![NONE; tree.id_bound()];
        for (i, &id) in order.iter().enumerate() {
            index_of[id] = i as u32;
        }
        let n_internal = child_len.iter().filter(|&&c| c > 0).count();
        let mut row = vec![0u32; n];
        let (mut next_internal, mut next_leaf) = (0u32, n_internal as u32);
        for i in 0..n {
            if child_len[i] > 0 {
                row[i] = next_internal;
                next_internal += 1;
            } else {
                row[i] = next_leaf;
                next_leaf += 1;
            }
        }

        let mut mean = vec![0.0f32; n * dim];
        let mut inv_var = vec![0.0f32; n * dim];
        let mut log_norm = vec![0.0f64; n];
        let mut counts = vec![0u64; n];
        let mut leaf_doc = vec![NONE; n];
        let mut docs = Vec::with_capacity(n - n_internal);
        for (i, &id) in order.iter().enumerate() {
            let node = tree.node(id);
            let r = row[i] as usize;
            let var = node.stats().variance(floor);
            for d in 0..dim {
                mean[r * dim + d] = node.mean()[d] as f32;
                inv_var[r * dim + d] = (1.0 / var[d]) as f32;
            }
            log_norm[r] = var.iter().map(|v| (2.0 * PI * v).ln()).sum();
            counts[i] = node.count();
            if let Some(doc) = node.leaf_doc() {
                leaf_doc[i] = docs.len() as u32;
                docs.push(doc.to_owned());
            }
        }

        Self {
            dim,
            node_ids: order,
            index_of,
            parent,
            child_start,
            child_len,
            depth,
            row,
            counts,
            leaf_doc,
            docs,
            n_internal,
            mean,
            inv_var,
            log_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total node count (the `N_0` of the tree).
    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.docs.len()
    }

    pub fn internal_count(&self) -> usize {
        self.n_internal
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0) as usize
    }

    fn check_dim(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn score_row(&self, r: usize, x: &[f32]) -> f64 {
        let span = r * self.dim..(r + 1) * self.dim;
        let q = weighted_sq_dist(x, &self.mean[span.clone()], &self.inv_var[span]);
        -(self.log_norm[r] + q as f64)
    }

    /// Log collocation score of node `id`, as used by both tree methods.
    pub fn node_logscore(&self, id: NodeId, x: &[f32]) -> Option<f64> {
        let i = *self.index_of.get(id)?;
        (i != NONE).then(|| self.score_row(self.row[i as usize] as usize, x))
    }

    fn path_of(&self, mut i: usize) -> Vec<NodeId> {
        let mut path = vec![self.node_ids[i]];
        while self.parent[i] != NONE {
            i = self.parent[i] as usize;
            path.push(self.node_ids[i]);
        }
        path.reverse();
        path
    }

    /// Per-node counts and scores along a root-to-leaf path.
    pub fn explain(&self, path: &[NodeId], x: &[f32]) -> Vec<PathStep> {
        path.iter()
            .filter_map(|&id| {
                let i = *self.index_of.get(id)?;
                (i != NONE).then(|| PathStep {
                    node: id,
                    count: self.counts[i as usize],
                    score: self.score_row(self.row[i as usize] as usize, x),
                })
            })
            .collect()
    }

    pub fn retrieve_bfs(&self, x: &[f32], budget: QueryBudget) -> Result<RankedResult> {
        self.check_dim(x)?;
        if self.is_empty() {
            return Ok(RankedResult::empty(Method::Bfs));
        }

        #[derive(PartialEq)]
        struct Entry {
            score: f64,
            id: NodeId,
            index: u32,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                self.score
                    .total_cmp(&other.score)
                    .then_with(|| other.id.cmp(&self.id))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            score: self.score_row(self.row[0] as usize, x),
            id: self.node_ids[0],
            index: 0,
        });
        let mut found: Vec<(usize, f64)> = Vec::with_capacity(budget.k);
        let mut pops = 0;
        while let Some(entry) = heap.pop() {
            pops += 1;
            let i = entry.index as usize;
            let start = self.child_start[i] as usize;
            let len = self.child_len[i] as usize;
            if len == 0 {
                found.push((i, entry.score));
                if found.len() >= budget.k {
                    break;
                }
            } else {
                for c in start..start + len {
                    heap.push(Entry {
                        score: self.score_row(self.row[c] as usize, x),
                        id: self.node_ids[c],
                        index: c as u32,
                    });
                }
            }
            if pops >= budget.n_max {
                break;
            }
        }

        Ok(RankedResult {
            method: Method::Bfs,
            paths: Some(found.iter().map(|&(i, _)| self.path_of(i)).collect()),
            entries: found
                .iter()
                .map(|&(i, score)| ScoredDoc {
                    doc_id: self.docs[self.leaf_doc[i] as usize].clone(),
                    score,
                })
                .collect(),
            expansions: Some(pops),
        })
    }

    pub fn retrieve_pathsum(&self, x: &[f32], k: usize, options: PathSumOptions) -> Result<RankedResult> {
        self.check_dim(x)?;
        if self.is_empty() || k == 0 {
            return Ok(RankedResult::empty(Method::PathSum));
        }

        let internal: Vec<f64> = (0..self.n_internal).map(|r| self.score_row(r, x)).collect();
        let mut prefix = vec![0.0f64; self.n_internal];
        let mut candidates: Vec<(f64, NodeId, u32)> = Vec::with_capacity(self.docs.len());
        for i in 0..self.node_ids.len() {
            let p = self.parent[i];
            let base = if p == NONE {
                0.0
            } else {
                prefix[self.row[p as usize] as usize]
            };
            let r = self.row[i] as usize;
            if self.child_len[i] > 0 {
                prefix[r] = base + internal[r];
                continue;
            }
            let mut score = base;
            let mut terms = self.depth[i] as usize;
            if options.include_leaf_score {
                score += self.score_row(r, x);
                terms += 1;
            }
            if options.depth_normalize && terms > 0 {
                score /= terms as f64;
            }
            candidates.push((score, self.node_ids[i], i as u32));
        }

        let by_rank = |a: &(f64, NodeId, u32), b: &(f64, NodeId, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k - 1, by_rank);
            candidates.truncate(k);
        }
        candidates.sort_unstable_by(by_rank);

        Ok(RankedResult {
            method: Method::PathSum,
            paths: Some(candidates.iter().map(|&(_, _, i)| self.path_of(i as usize)).collect()),
            entries: candidates
                .iter()
                .map(|&(score, _, i)| ScoredDoc {
                    doc_id: self.docs[self.leaf_doc[i as usize] as usize].clone(),
                    score,
                })
                .collect(),
            expansions: None,
        })
    }
}

/// Exact inner-product ranking over every corpus row; ties go to the earlier row.
pub fn retrieve_dot(corpus: &EmbeddingMatrix, x: &[f32], k: usize) -> Result<RankedResult> {
    if x.len() != corpus.dim() {
        return Err(Error::Shape {
            expected: corpus.dim(),
            got: x.len(),
        });
    }
    let mut scored: Vec<(f32, usize)> = corpus
        .rows()
        .enumerate()
        .map(|(i, row)| (dot_f32(row, x), i))
        .collect();
    let by_rank = |a: &(f32, usize), b: &(f32, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k == 0 {
        scored.clear();
    } else if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    Ok(RankedResult {
        method: Method::Dot,
        entries: scored
            .into_iter()
            .map(|(s, i)| ScoredDoc {
                doc_id: corpus.id(i).to_owned(),
                score: s as f64,
            })
            .collect(),
        paths: None,
        expansions: None,
    })
}

/// A configured ranking method over a frozen tree or a flat corpus.
#[derive(Debug, Clone, Copy)]
pub enum Retriever<'a> {
    Bfs {
        tree: &'a FrozenTree,
        /// Pop budget; `None` uses [`default_n_max`].
        n_max: Option<usize>,
    },
    PathSum {
        tree: &'a FrozenTree,
        options: PathSumOptions,
    },
    Dot {
        corpus: &'a EmbeddingMatrix,
    },
}

impl Retriever<'_> {
    pub fn method(&self) -> Method {
        match self {
            Retriever::Bfs { .. } => Method::Bfs,
            Retriever::PathSum { .. } => Method::PathSum,
            Retriever::Dot { .. } => Method::Dot,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Retriever::Bfs { tree, .. } | Retriever::PathSum { tree, .. } => tree.dim(),
            Retriever::Dot { corpus } => corpus.dim(),
        }
    }

    pub fn retrieve(&self, x: &[f32], k: usize) -> Result<RankedResult> {
        match *self {
            Retriever::Bfs { tree, n_max } => {
                let n_max = n_max.unwrap_or_else(|| default_n_max(k, tree.node_count()));
                tree.retrieve_bfs(x, QueryBudget::new(k, n_max)?)
            }
            Retriever::PathSum { tree, options } => tree.retrieve_pathsum(x, k, options),
            Retriever::Dot { corpus } => retrieve_dot(corpus, x, k),
        }
    }
}
