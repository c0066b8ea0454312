//! Tree snapshots: a compact binary form and a JSON form.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "CWTR" | version u32 | dim u32 | floor f64 | slots u64 | root i64 (-1 = empty)
//! per slot: live u8; if live:
//!   count u64 | parent i64 | n_children u32 | children u32* |
//!   has_doc u8 | [doc_len u32 | doc utf-8] | mean f64*dim | m2 f64*dim
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{CobwebTree, ConceptNode, GaussianStats, NodeId};
use crate::error::{Error, Result};

pub const TREE_MAGIC: &[u8; 4] = b"CWTR";
pub const TREE_VERSION: u32 = 1;

pub fn encode_snapshot(tree: &CobwebTree) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(TREE_MAGIC);
    buf.write_u32::<LittleEndian>(TREE_VERSION).unwrap();
    buf.write_u32::<LittleEndian>(tree.dim as u32).unwrap();
    buf.write_f64::<LittleEndian>(tree.floor).unwrap();
    buf.write_u64::<LittleEndian>(tree.nodes.len() as u64).unwrap();
    buf.write_i64::<LittleEndian>(tree.root.map_or(-1, |r| r as i64)).unwrap();
    for slot in &tree.nodes {
        let Some(node) = slot else {
            buf.write_u8(0).unwrap();
            continue;
        };
        buf.write_u8(1).unwrap();
        buf.write_u64::<LittleEndian>(node.stats.count).unwrap();
        buf.write_i64::<LittleEndian>(node.parent.map_or(-1, |p| p as i64)).unwrap();
        buf.write_u32::<LittleEndian>(node.children.len() as u32).unwrap();
        for &c in &node.children {
            buf.write_u32::<LittleEndian>(c as u32).unwrap();
        }
        match &node.leaf_doc {
            Some(doc) => {
                buf.write_u8(1).unwrap();
                buf.write_u32::<LittleEndian>(doc.len() as u32).unwrap();
                buf.extend_from_slice(doc.as_bytes());
            }
            None => buf.write_u8(0).unwrap(),
        }
        for &v in node.stats.mean.iter().chain(&node.stats.m2) {
            buf.write_f64::<LittleEndian>(v).unwrap();
        }
    }
    buf
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<CobwebTree> {
    let mut r = bytes;
    let eof = |_| Error::Format("truncated tree snapshot".into());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != TREE_MAGIC {
        return Err(Error::Format(format!("bad tree magic {magic:?}")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != TREE_VERSION {
        return Err(Error::Format(format!("unsupported tree version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let floor = r.read_f64::<LittleEndian>().map_err(eof)?;
    let slots = r.read_u64::<LittleEndian>().map_err(eof)? as usize;
    let root = r.read_i64::<LittleEndian>().map_err(eof)?;
    if slots > bytes.len() {
        return Err(Error::Format(format!("implausible slot count {slots}")));
    }
    let mut nodes = Vec::with_capacity(slots);
    for _ in 0..slots {
        if r.read_u8().map_err(eof)? == 0 {
            nodes.push(None);
            continue;
        }
        let count = r.read_u64::<LittleEndian>().map_err(eof)?;
        let parent = r.read_i64::<LittleEndian>().map_err(eof)?;
        let n_children = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
        if n_children > r.len() / 4 {
            return Err(Error::Format("truncated tree snapshot".into()));
        }
        let mut children = Vec::with_capacity(n_children);
        for _ in 0..n_children {
            children.push(r.read_u32::<LittleEndian>().map_err(eof)? as NodeId);
        }
        let leaf_doc = if r.read_u8().map_err(eof)? == 1 {
            let len = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
            if len > r.len() {
                return Err(Error::Format("truncated tree snapshot".into()));
            }
            let (doc, rest) = r.split_at(len);
            r = rest;
            Some(
                String::from_utf8(doc.to_vec())
                    .map_err(|_| Error::Format("document id is not utf-8".into()))?,
            )
        } else {
            None
        };
        let mut take = |len: usize| -> Result<Vec<f64>> {
            (0..len)
                .map(|_| r.read_f64::<LittleEndian>().map_err(eof))
                .collect()
        };
        let mean = take(dim)?;
        let m2 = take(dim)?;
        nodes.push(Some(RawNode {
            count,
            parent: (parent >= 0).then_some(parent as NodeId),
            children,
            leaf_doc,
            mean,
            m2,
        }));
    }
    if !r.is_empty() {
        return Err(Error::Consistency(format!("{} trailing bytes in tree snapshot", r.len())));
    }
    assemble(dim, floor, (root >= 0).then_some(root as NodeId), nodes)
}

struct RawNode {
    count: u64,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    leaf_doc: Option<String>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

fn assemble(dim: usize, floor: f64, root: Option<NodeId>, raw: Vec<Option<RawNode>>) -> Result<CobwebTree> {
    let mut tree = CobwebTree::new(dim, floor)?;
    let bound = raw.len();
    for (id, slot) in raw.into_iter().enumerate() {
        match slot {
            None => {
                tree.nodes.push(None);
                tree.free.insert(id);
            }
            Some(n) => {
                if n.mean.len() != dim || n.m2.len() != dim {
                    return Err(Error::Shape { expected: dim, got: n.mean.len() });
                }
                if n.children.iter().chain(&n.parent).any(|&c| c >= bound) {
                    return Err(Error::Consistency(format!("node {id} references a missing node")));
                }
                let stats = GaussianStats { count: n.count, mean: n.mean, m2: n.m2 };
                let mut node = ConceptNode::new(stats, floor);
                node.parent = n.parent;
                node.children = n.children;
                if let Some(doc) = n.leaf_doc {
                    if tree.doc_leaf.insert(doc.clone(), id).is_some() {
                        return Err(Error::Validation(format!("document `{doc}` appears twice")));
                    }
                    node.leaf_doc = Some(doc);
                }
                tree.nodes.push(Some(node));
            }
        }
    }
    if let Some(r) = root {
        if tree.get(r).is_none() {
            return Err(Error::Consistency(format!("root {r} is not a live node")));
        }
    }
    tree.root = root;
    for slot in tree.nodes.iter().flatten() {
        if slot.children.iter().any(|&c| tree.get(c).is_none()) {
            return Err(Error::Consistency("child references a free slot".into()));
        }
    }
    tree.check_invariants(1e-6).map_err(Error::Consistency)?;
    Ok(tree)
}

pub fn write_tree(tree: &CobwebTree, path: &Path) -> Result<()> {
    fs::write(path, encode_snapshot(tree)).map_err(|e| Error::io(path, e))
}

/// Loads a tree, accepting either the binary snapshot or the JSON form.
pub fn read_tree(path: &Path) -> Result<CobwebTree> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(TREE_MAGIC) {
        decode_snapshot(&bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format("tree file is neither a snapshot nor JSON".into()))?;
        tree_from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct TreeJson {
    pub dim: usize,
    pub variance_floor: f64,
    pub root: Option<NodeId>,
    pub slots: usize,
    pub nodes: Vec<NodeJson>,
    pub doc_vectors: Vec<DocVectorJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct NodeJson {
    pub id: NodeId,
    pub count: u64,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub leaf_doc: Option<String>,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DocVectorJson {
    pub doc_id: String,
    pub vector: Vec<f64>,
}

pub fn tree_to_json(tree: &CobwebTree) -> String {
    let mut depth: HashMap<NodeId, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut doc_vectors = Vec::new();
    for id in tree.preorder() {
        let node = tree.node(id);
        let d = node.parent.map_or(0, |p| depth[&p] + 1);
        depth.insert(id, d);
        if let Some(doc) = &node.leaf_doc {
            doc_vectors.push(DocVectorJson {
                doc_id: doc.clone(),
                vector: node.stats.mean.clone(),
            });
        }
        nodes.push(NodeJson {
            id,
            count: node.stats.count,
            depth: d,
            parent: node.parent,
            children: node.children.clone(),
            leaf_doc: node.leaf_doc.clone(),
            mean: node.stats.mean.clone(),
            m2: node.stats.m2.clone(),
        });
    }
    let json = TreeJson {
        dim: tree.dim,
        variance_floor: tree.floor,
        root: tree.root,
        slots: tree.nodes.len(),
        nodes,
        doc_vectors,
    };
    serde_json::to_string(&json).expect("tree serializes")
}

pub fn tree_from_json(text: &str) -> Result<CobwebTree> {
    let json: TreeJson =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("tree json: {e}")))?;
    if json.nodes.iter().any(|n| n.id >= json.slots) {
        return Err(Error::Consistency("node id beyond slot count".into()));
    }
    let mut raw: Vec<Option<RawNode>> = (0..json.slots).map(|_| None).collect();
    for n in json.nodes {
        if raw[n.id].is_some() {
            return Err(Error::Consistency(format!("node {} listed twice", n.id)));
        }
        raw[n.id] = Some(RawNode {
            count: n.count,
            parent: n.parent,
            children: n.children,
            leaf_doc: n.leaf_doc,
            mean: n.mean,
            m2: n.m2,
        });
    }
    let tree = assemble(json.dim, json.variance_floor, json.root, raw)?;
    for dv in &json.doc_vectors {
        match tree.doc_vector(&dv.doc_id) {
            Some(v) if v == dv.vector.as_slice() => {}
            _ => {
                return Err(Error::Consistency(format!(
                    "doc_vectors entry for `{}` disagrees with its leaf",
                    dv.doc_id
                )))
            }
        }
    }
    Ok(tree)
}

pub fn write_tree_json(tree: &CobwebTree, path: &Path) -> Result<()> {
    fs::write(path, tree_to_json(tree)).map_err(|e| Error::io(path, e))
}

pub fn read_tree_json(path: &Path) -> Result<CobwebTree> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    tree_from_json(&text)
}
