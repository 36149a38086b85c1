use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use debtfree_bench::dataset;
use debtfree_core::active::{Policy, PolicyConfig};
use debtfree_core::classifiers::{fit, ClassifierSpec};
use debtfree_core::corpus::{build_vocabulary, featurize};
use debtfree_core::pipeline::prepare_active;
use debtfree_core::unsupervised::cla_label;

fn tfidf(c: &mut Criterion) {
    let ds = dataset(4, 1000);
    c.bench_function("tfidf/4000 comments", |b| {
        b.iter(|| {
            let vocab = build_vocabulary(&[&ds.corpus], 4000).unwrap();
            featurize(black_box(&ds.corpus), &vocab)
        })
    });
}

fn cla(c: &mut Criterion) {
    let ds = dataset(4, 1000);
    c.bench_function("cla/4000 comments", |b| {
        b.iter(|| cla_label(black_box(&ds.features)))
    });
}

fn forest(c: &mut Criterion) {
    let ds = dataset(4, 750);
    let y = ds.corpus.truth().unwrap();
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    for n_trees in [10, 100] {
        let spec = ClassifierSpec::tree_ensemble(n_trees, 1);
        group.bench_function(format!("fit {n_trees} trees/3000 rows"), |b| {
            b.iter(|| fit(&spec, black_box(&ds.features), &y, None).unwrap())
        });
    }
    group.finish();
}

fn session_step(c: &mut Criterion) {
    let ds = dataset(4, 300);
    let config = PolicyConfig {
        n_trees: 30,
        ..PolicyConfig::new(Policy::Falcon, 3)
    };
    let prepared = prepare_active(&ds, "project-a", true, None, config).unwrap();
    let mut group = c.benchmark_group("session");
    group.sample_size(10);
    group.bench_function("query and label with refit", |b| {
        b.iter_batched(
            || prepared.start().unwrap().unwrap(),
            |mut state| {
                let row = state.next_query().unwrap();
                state.record_label(row, true).unwrap();
                state
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, tfidf, cla, forest, session_step);
criterion_main!(benches);
