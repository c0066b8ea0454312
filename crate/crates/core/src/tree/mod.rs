//! Incremental concept hierarchy with diagonal-Gaussian prototypes.
//!
//! Every node summarizes the instances beneath it with a [`GaussianStats`].
//! Leaves hold exactly one document. Insertion sorts an instance down from the
//! root; at each internal node one of four operators is applied, whichever
//! gives the partition with the highest mean category utility:
//!
//! * add the instance to the best child and descend,
//! * create a new singleton child,
//! * merge the two best children and descend into the merged node,
//! * split the best child (promote its children) and re-evaluate.
//!
//! Reaching a leaf turns it into an internal node holding the old leaf and the
//! new one.

mod export;
mod persist;
mod stats;

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::EmbeddingMatrix;

pub use export::{export_tree, ExportFormat};
pub use persist::{
    decode_snapshot, encode_snapshot, read_tree, read_tree_json, tree_from_json, tree_to_json,
    write_tree, write_tree_json,
};
pub use stats::{category_utility, gaussian_entropy, partition_score, GaussianStats};

pub type NodeId = usize;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-3;
/// Operator scores closer than this are considered tied.
pub const TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptNode {
    pub(crate) stats: GaussianStats,
    pub(crate) children: Vec<NodeId>,
    pub(crate) parent: Option<NodeId>,
    pub(crate) leaf_doc: Option<String>,
    entropy: f64,
}

impl ConceptNode {
    fn new(stats: GaussianStats, floor: f64) -> Self {
        let entropy = stats.entropy(floor);
        Self {
            stats,
            children: Vec::new(),
            parent: None,
            leaf_doc: None,
            entropy,
        }
    }

    pub fn count(&self) -> u64 {
        self.stats.count
    }

    pub fn stats(&self) -> &GaussianStats {
        &self.stats
    }

    pub fn mean(&self) -> &[f64] {
        &self.stats.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.stats.m2
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn leaf_doc(&self) -> Option<&str> {
        self.leaf_doc.as_deref()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Cached entropy under the owning tree's variance floor.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Best,
    New,
    Merge,
    Split,
}

/// One operator decision made at an internal node during insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub node: NodeId,
    pub depth: usize,
    pub op: Operation,
    pub best: f64,
    pub new: f64,
    pub merge: Option<f64>,
    pub split: Option<f64>,
    pub best_child: NodeId,
    pub second_child: Option<NodeId>,
}

impl Decision {
    pub fn score(&self, op: Operation) -> Option<f64> {
        match op {
            Operation::Best => Some(self.best),
            Operation::New => Some(self.new),
            Operation::Merge => self.merge,
            Operation::Split => self.split,
        }
    }
}

/// Picks the operator with the highest score; near-ties resolve in
/// `Best > New > Merge > Split` order.
pub fn choose_operation(scores: &[(Operation, Option<f64>)]) -> Operation {
    let max = scores
        .iter()
        .filter_map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .find(|(_, s)| s.is_some_and(|s| s >= max - TIE_EPSILON))
        .map(|(op, _)| *op)
        .expect("at least one operator is always available")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CobwebTree {
    dim: usize,
    floor: f64,
    nodes: Vec<Option<ConceptNode>>,
    free: BTreeSet<NodeId>,
    root: Option<NodeId>,
    doc_leaf: HashMap<String, NodeId>,
}

impl CobwebTree {
    pub fn new(dim: usize, variance_floor: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("tree dimension must be positive".into()));
        }
        if !(variance_floor > 0.0 && variance_floor.is_finite()) {
            return Err(Error::Validation(format!(
                "variance floor must be positive, got {variance_floor}"
            )));
        }
        Ok(Self {
            dim,
            floor: variance_floor,
            nodes: Vec::new(),
            free: BTreeSet::new(),
            root: None,
            doc_leaf: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variance_floor(&self) -> f64 {
        self.floor
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    /// Number of live nodes, internal and leaf.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.doc_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    /// Size of the id space; live ids are all below this.
    pub fn id_bound(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &ConceptNode {
        self.nodes[id].as_ref().expect("dangling node id")
    }

    pub fn get(&self, id: NodeId) -> Option<&ConceptNode> {
        self.nodes.get(id).and_then(Option::as_ref)
    }

    fn node_mut(&mut self, id: NodeId) -> &mut ConceptNode {
        self.nodes[id].as_mut().expect("dangling node id")
    }

    pub fn leaf_of(&self, doc_id: &str) -> Option<NodeId> {
        self.doc_leaf.get(doc_id).copied()
    }

    /// The raw vector stored for a document (its leaf mean).
    pub fn doc_vector(&self, doc_id: &str) -> Option<&[f64]> {
        self.leaf_of(doc_id).map(|id| self.node(id).mean())
    }

    /// Differential entropy of a node under this tree's variance floor.
    pub fn node_entropy(&self, id: NodeId) -> f64 {
        self.node(id).entropy
    }

    /// Live node ids in depth-first pre-order from the root.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut stack: Vec<NodeId> = self.root.into_iter().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.node(id).children.iter().rev());
        }
        out
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.path_to(id).len() - 1
    }

    /// Documents stored in leaves beneath `id`, in pre-order.
    pub fn leaf_docs_under(&self, id: NodeId) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = self.node(n);
            if let Some(doc) = node.leaf_doc() {
                out.push(doc);
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    fn alloc(&mut self, node: ConceptNode) -> NodeId {
        match self.free.pop_first() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        }
    }

    fn release(&mut self, id: NodeId) {
        self.nodes[id] = None;
        self.free.insert(id);
    }

    fn new_leaf(&mut self, doc_id: &str, x: &[f64], parent: Option<NodeId>) -> NodeId {
        let mut node = ConceptNode::new(GaussianStats::singleton(x), self.floor);
        node.leaf_doc = Some(doc_id.to_owned());
        node.parent = parent;
        let id = self.alloc(node);
        self.doc_leaf.insert(doc_id.to_owned(), id);
        id
    }

    fn absorb(&mut self, id: NodeId, x: &[f64]) {
        let floor = self.floor;
        let node = self.node_mut(id);
        node.stats.update(x);
        node.entropy = node.stats.entropy(floor);
    }

    /// Inserts a document and returns its leaf id.
    pub fn insert(&mut self, doc_id: &str, x: &[f32]) -> Result<NodeId> {
        self.insert_inner(doc_id, x, None)
    }

    /// Like [`insert`](Self::insert), also returning every operator decision taken.
    pub fn insert_traced(&mut self, doc_id: &str, x: &[f32]) -> Result<(NodeId, Vec<Decision>)> {
        let mut trace = Vec::new();
        let leaf = self.insert_inner(doc_id, x, Some(&mut trace))?;
        Ok((leaf, trace))
    }

    fn insert_inner(
        &mut self,
        doc_id: &str,
        x: &[f32],
        mut trace: Option<&mut Vec<Decision>>,
    ) -> Result<NodeId> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "vector for `{doc_id}` has non-finite values"
            )));
        }
        if self.doc_leaf.contains_key(doc_id) {
            return Err(Error::DuplicateDoc(doc_id.to_owned()));
        }
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();

        let Some(mut cur) = self.root else {
            let leaf = self.new_leaf(doc_id, &x, None);
            self.root = Some(leaf);
            return Ok(leaf);
        };
        let mut depth = 0;
        loop {
            if self.node(cur).is_leaf() {
                return Ok(self.fringe_split(cur, doc_id, &x));
            }
            let decision = self.evaluate(cur, depth, &x);
            let op = decision.op;
            let (best, second) = (decision.best_child, decision.second_child);
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(decision);
            }
            match op {
                Operation::Best => {
                    self.absorb(cur, &x);
                    cur = best;
                    depth += 1;
                }
                Operation::New => {
                    self.absorb(cur, &x);
                    let leaf = self.new_leaf(doc_id, &x, Some(cur));
                    self.node_mut(cur).children.push(leaf);
                    return Ok(leaf);
                }
                Operation::Merge => {
                    self.absorb(cur, &x);
                    cur = self.merge_children(cur, best, second.expect("merge needs two children"));
                    depth += 1;
                }
                Operation::Split => self.split_child(cur, best),
            }
        }
    }

    /// Replaces leaf `leaf` with a new internal node over it and a new leaf for `x`.
    fn fringe_split(&mut self, leaf: NodeId, doc_id: &str, x: &[f64]) -> NodeId {
        let parent = self.node(leaf).parent;
        let mut stats = self.node(leaf).stats.clone();
        stats.update(x);
        let mut internal = ConceptNode::new(stats, self.floor);
        internal.parent = parent;
        let internal_id = self.alloc(internal);
        let new_leaf = self.new_leaf(doc_id, x, Some(internal_id));
        self.node_mut(internal_id).children = vec![leaf, new_leaf];
        self.node_mut(leaf).parent = Some(internal_id);
        match parent {
            Some(p) => {
                let slot = self.node(p).children.iter().position(|&c| c == leaf).unwrap();
                self.node_mut(p).children[slot] = internal_id;
            }
            None => self.root = Some(internal_id),
        }
        new_leaf
    }

    fn merge_children(&mut self, parent: NodeId, a: NodeId, b: NodeId) -> NodeId {
        let stats = GaussianStats::combined(&self.node(a).stats, &self.node(b).stats);
        let pos_a = self.node(parent).children.iter().position(|&c| c == a).unwrap();
        let pos_b = self.node(parent).children.iter().position(|&c| c == b).unwrap();
        let (first, second) = if pos_a < pos_b { (a, b) } else { (b, a) };
        let mut merged = ConceptNode::new(stats, self.floor);
        merged.parent = Some(parent);
        merged.children = vec![first, second];
        let id = self.alloc(merged);
        self.node_mut(a).parent = Some(id);
        self.node_mut(b).parent = Some(id);
        let children = &mut self.node_mut(parent).children;
        children[pos_a.min(pos_b)] = id;
        children.remove(pos_a.max(pos_b));
        id
    }

    fn split_child(&mut self, parent: NodeId, child: NodeId) {
        let grandchildren = std::mem::take(&mut self.node_mut(child).children);
        for &g in &grandchildren {
            self.node_mut(g).parent = Some(parent);
        }
        let children = &mut self.node_mut(parent).children;
        let pos = children.iter().position(|&c| c == child).unwrap();
        children.splice(pos..=pos, grandchildren);
        self.release(child);
    }

    /// Scores the four operators for inserting `x` under internal node `id`.
    fn evaluate(&self, id: NodeId, depth: usize, x: &[f64]) -> Decision {
        let floor = self.floor;
        let parent = self.node(id);
        let children = &parent.children;
        let n = children.len() as f64;
        let total = (parent.stats.count + 1) as f64;
        let up = parent.stats.entropy_with(x, floor);

        let terms: Vec<f64> = children
            .iter()
            .map(|&c| {
                let c = self.node(c);
                c.stats.count as f64 / total * (up - c.entropy)
            })
            .collect();
        let base: f64 = terms.iter().sum();

        let mut best: Option<(usize, f64)> = None;
        let mut second: Option<(usize, f64)> = None;
        for (i, &c) in children.iter().enumerate() {
            let child = self.node(c);
            let grown = (child.stats.count + 1) as f64 / total * (up - child.stats.entropy_with(x, floor));
            let score = (base - terms[i] + grown) / n;
            if best.is_none_or(|(_, s)| score > s) {
                second = best;
                best = Some((i, score));
            } else if second.is_none_or(|(_, s)| score > s) {
                second = Some((i, score));
            }
        }
        let (best_idx, best_score) = best.expect("internal node has children");

        let singleton = 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E * floor).ln();
        let new_score = (base + (up - singleton) / total) / (n + 1.0);

        let merge_score = second.map(|(j, _)| {
            let (a, b) = (self.node(children[best_idx]), self.node(children[j]));
            let mut merged = GaussianStats::combined(&a.stats, &b.stats);
            merged.update(x);
            let term = merged.count as f64 / total * (up - merged.entropy(floor));
            (base - terms[best_idx] - terms[j] + term) / (n - 1.0)
        });

        let best_node = self.node(children[best_idx]);
        let split_score = (!best_node.is_leaf()).then(|| {
            let count = parent.stats.count as f64;
            let u = parent.entropy;
            let kept: f64 = children
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != best_idx)
                .map(|(_, &c)| {
                    let c = self.node(c);
                    c.stats.count as f64 / count * (u - c.entropy)
                })
                .sum();
            let promoted: f64 = best_node
                .children
                .iter()
                .map(|&g| {
                    let g = self.node(g);
                    g.stats.count as f64 / count * (u - g.entropy)
                })
                .sum();
            (kept + promoted) / (n - 1.0 + best_node.children.len() as f64)
        });

        let op = choose_operation(&[
            (Operation::Best, Some(best_score)),
            (Operation::New, Some(new_score)),
            (Operation::Merge, merge_score),
            (Operation::Split, split_score),
        ]);
        Decision {
            node: id,
            depth,
            op,
            best: best_score,
            new: new_score,
            merge: merge_score,
            split: split_score,
            best_child: children[best_idx],
            second_child: second.map(|(j, _)| children[j]),
        }
    }

    /// Checks structural and statistical invariants; returns the first violation.
    pub fn check_invariants(&self, rel_tol: f64) -> std::result::Result<(), String> {
        let Some(root) = self.root else {
            return if self.node_count() == 0 && self.doc_leaf.is_empty() {
                Ok(())
            } else {
                Err("empty tree has nodes".into())
            };
        };
        if self.node(root).parent.is_some() {
            return Err("root has a parent".into());
        }
        let mut order = Vec::with_capacity(self.node_count());
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut visited[id], true) {
                return Err(format!("node {id} reached twice; not a tree"));
            }
            order.push(id);
            stack.extend(self.node(id).children.iter().rev());
        }
        if order.len() != self.node_count() {
            return Err(format!(
                "{} nodes reachable from root, {} live",
                order.len(),
                self.node_count()
            ));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1.0);
        let mut leaves = 0;
        for &id in &order {
            let node = self.node(id);
            for &c in &node.children {
                if self.node(c).parent != Some(id) {
                    return Err(format!("child {c} does not point back to {id}"));
                }
            }
            if node.is_leaf() {
                leaves += 1;
                let Some(doc) = node.leaf_doc.as_deref() else {
                    return Err(format!("leaf {id} has no document"));
                };
                if self.doc_leaf.get(doc) != Some(&id) {
                    return Err(format!("leaf {id} not indexed under `{doc}`"));
                }
                if node.stats.count != 1 || node.stats.m2.iter().any(|&v| v != 0.0) {
                    return Err(format!("leaf {id} does not hold exactly one instance"));
                }
            } else {
                if node.leaf_doc.is_some() {
                    return Err(format!("internal node {id} holds a document"));
                }
                let sum: u64 = node.children.iter().map(|&c| self.node(c).stats.count).sum();
                if sum != node.stats.count {
                    return Err(format!("node {id} count {} != children sum {sum}", node.stats.count));
                }
                for d in 0..self.dim {
                    let weighted: f64 = node
                        .children
                        .iter()
                        .map(|&c| {
                            let c = self.node(c);
                            c.stats.count as f64 * c.stats.mean[d]
                        })
                        .sum::<f64>()
                        / node.stats.count as f64;
                    if !close(weighted, node.stats.mean[d]) {
                        return Err(format!("node {id} mean[{d}] {} != weighted {weighted}", node.stats.mean[d]));
                    }
                }
            }
        }
        if leaves != self.doc_leaf.len() {
            return Err(format!("{leaves} leaves but {} documents", self.doc_leaf.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub variance_floor: f64,
    /// Insert in a seeded random order instead of corpus order.
    pub shuffle_seed: Option<u64>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            shuffle_seed: None,
        }
    }
}

/// Builds a tree from every row of `corpus`.
pub fn build_tree(corpus: &EmbeddingMatrix, config: &BuildConfig) -> Result<CobwebTree> {
    let mut tree = CobwebTree::new(corpus.dim(), config.variance_floor)?;
    let mut order: Vec<usize> = (0..corpus.count()).collect();
    if let Some(seed) = config.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    for r in order {
        tree.insert(corpus.id(r), corpus.row(r))?;
    }
    Ok(tree)
}
