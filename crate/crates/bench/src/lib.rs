//! Shared fixtures for the criterion benches.

use cobweb_core::synth::{gaussian_clusters, ClusterSpec, SyntheticSet};
use cobweb_core::tree::{build_tree, BuildConfig};
use cobweb_core::FrozenTree;

/// A 20-cluster corpus with `n_docs` rows in `dim` dimensions and 64 queries.
pub fn clustered(n_docs: usize, dim: usize) -> SyntheticSet {
    gaussian_clusters(&ClusterSpec {
        n_clusters: 20,
        dim,
        n_docs,
        n_queries: 64,
        sigma: 0.3,
        seed: 0,
    })
    .expect("valid synthetic spec")
}

pub fn frozen(set: &SyntheticSet) -> FrozenTree {
    let tree = build_tree(&set.corpus, &BuildConfig::default()).expect("tree builds");
    FrozenTree::new(&tree)
}
