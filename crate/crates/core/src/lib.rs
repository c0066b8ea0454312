//! Hierarchical semantic retrieval over a prototype tree.
//!
//! Dense document embeddings are optionally whitened ([`whiten`]), organized
//! into an incrementally built concept hierarchy ([`tree`]) and searched
//! coarse-to-fine ([`retrieval`]). An exact inner-product scan serves as the
//! flat baseline, and [`eval`] scores ranked lists against relevance judgments.

pub mod error;
pub mod eval;
pub mod io;
pub mod retrieval;
pub mod synth;
pub mod tree;
pub mod whiten;

pub use error::{Error, Result};
pub use eval::{run_eval, EvalReport};
pub use io::{DocStore, EmbeddingMatrix, Qrels};
pub use retrieval::{FrozenTree, Method, QueryBudget, RankedResult, Retriever};
pub use tree::{build_tree, BuildConfig, CobwebTree, ConceptNode, NodeId};
pub use whiten::{apply_whitening, fit_whitening, WhiteningConfig, WhiteningTransform};
