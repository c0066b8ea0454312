use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cobweb_bench::clustered;
use cobweb_core::tree::{build_tree, BuildConfig};
use cobweb_core::FrozenTree;

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    group.sample_size(10);
    for &n in &[500usize, 2_000] {
        let set = clustered(n, 32);
        group.bench_with_input(BenchmarkId::new("insert_all", n), &n, |b, _| {
            b.iter(|| build_tree(&set.corpus, &BuildConfig::default()).unwrap())
        });
        let tree = build_tree(&set.corpus, &BuildConfig::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("freeze", n), &n, |b, _| b.iter(|| FrozenTree::new(&tree)));
    }
    group.finish();
}

criterion_group!(benches, build);
criterion_main!(benches);
