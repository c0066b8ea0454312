//! Human-facing renderings of a tree: JSON node lists and Graphviz DOT.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use super::{CobwebTree, NodeId};
use crate::error::Error;
use crate::io::DocStore;

const TEXT_LIMIT: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "dot" => Ok(Self::Dot),
            other => Err(Error::Validation(format!("unknown export format `{other}`"))),
        }
    }
}

#[derive(Serialize)]
struct ExportNode<'a> {
    id: NodeId,
    count: u64,
    depth: usize,
    children: &'a [NodeId],
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_doc: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

fn truncate(text: &str) -> String {
    match text.char_indices().nth(TEXT_LIMIT) {
        Some((cut, _)) => text[..cut].to_owned(),
        None => text.to_owned(),
    }
}

/// Renders the tree down to `max_depth` (root is depth 0).
///
/// Leaves whose document is missing from `docs` are rendered with their id only.
pub fn export_tree(
    tree: &CobwebTree,
    docs: Option<&DocStore>,
    format: ExportFormat,
    max_depth: Option<usize>,
) -> Vec<u8> {
    let mut visible = Vec::new();
    let mut stack: Vec<(NodeId, usize)> = tree.root().map(|r| (r, 0)).into_iter().collect();
    while let Some((id, depth)) = stack.pop() {
        visible.push((id, depth));
        if max_depth.is_none_or(|m| depth < m) {
            stack.extend(tree.node(id).children().iter().rev().map(|&c| (c, depth + 1)));
        }
    }

    let text_of = |id: NodeId| {
        let doc = tree.node(id).leaf_doc()?;
        docs?.get(doc).map(truncate)
    };

    match format {
        ExportFormat::Json => {
            let nodes: Vec<ExportNode> = visible
                .iter()
                .map(|&(id, depth)| {
                    let node = tree.node(id);
                    ExportNode {
                        id,
                        count: node.count(),
                        depth,
                        children: node.children(),
                        leaf_doc: node.leaf_doc(),
                        text: text_of(id),
                    }
                })
                .collect();
            let mut out = serde_json::to_vec_pretty(&serde_json::json!({
                "root": tree.root(),
                "nodes": nodes,
            }))
            .expect("export serializes");
            out.push(b'\n');
            out
        }
        ExportFormat::Dot => {
            let mut out = String::from("digraph cobweb {\n  node [shape=box];\n");
            for &(id, _) in &visible {
                let node = tree.node(id);
                let mut label = format!("#{id} n={}", node.count());
                if let Some(doc) = node.leaf_doc() {
                    let _ = write!(label, "\\n{}", dot_escape(doc));
                    if let Some(text) = text_of(id) {
                        let _ = write!(label, "\\n{}", dot_escape(&text));
                    }
                }
                let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
            }
            for &(id, depth) in &visible {
                if max_depth.is_some_and(|m| depth >= m) {
                    continue;
                }
                for &c in tree.node(id).children() {
                    let _ = writeln!(out, "  n{id} -> n{c};");
                }
            }
            out.push_str("}\n");
            out.into_bytes()
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_node_tree() -> CobwebTree {
        let mut t = CobwebTree::new(1, 1e-3).unwrap();
        t.insert("a", &[0.0]).unwrap();
        t.insert("b", &[5.0]).unwrap();
        t
    }

    #[test]
    fn single_leaf_json() {
        let mut t = CobwebTree::new(1, 1e-3).unwrap();
        t.insert("only", &[1.0]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&export_tree(&t, None, ExportFormat::Json, None)).unwrap();
        let nodes = v["nodes"].as_array().unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0]["count"], 1);
        assert_eq!(nodes[0]["leaf_doc"], "only");
    }

    #[test]
    fn dot_statement_counts() {
        let dot = String::from_utf8(export_tree(&three_node_tree(), None, ExportFormat::Dot, None)).unwrap();
        let nodes = dot.lines().filter(|l| l.contains("[label=")).count();
        let edges = dot.lines().filter(|l| l.contains("->")).count();
        assert_eq!((nodes, edges), (3, 2));
    }

    #[test]
    fn max_depth_zero_is_root_only() {
        let t = three_node_tree();
        let v: serde_json::Value =
            serde_json::from_slice(&export_tree(&t, None, ExportFormat::Json, Some(0))).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 1);
        assert_eq!(v["nodes"][0]["count"], 2);
        let dot = String::from_utf8(export_tree(&t, None, ExportFormat::Dot, Some(0))).unwrap();
        assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 0);
    }

    #[test]
    fn leaf_text_is_truncated_and_missing_docs_tolerated() {
        let t = three_node_tree();
        let mut docs = DocStore::new();
        docs.insert("a", "é".repeat(100)).unwrap();
        let v: serde_json::Value =
            serde_json::from_slice(&export_tree(&t, Some(&docs), ExportFormat::Json, None)).unwrap();
        let nodes = v["nodes"].as_array().unwrap();
        let a = nodes.iter().find(|n| n["leaf_doc"] == "a").unwrap();
        assert_eq!(a["text"].as_str().unwrap().chars().count(), 80);
        let b = nodes.iter().find(|n| n["leaf_doc"] == "b").unwrap();
        assert!(b.get("text").is_none());
    }
}
