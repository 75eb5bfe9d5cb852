use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use xids_bench::fixture;
use xids_core::dice::generate_counterfactuals;
use xids_core::lime::explain_lime;
use xids_core::models::{train_random_forest, ForestParams};
use xids_core::shap::{shap_exact, shap_sampled, SampledConfig};
use xids_core::{CounterfactualQuery, LimeConfig};

fn forest_training(c: &mut Criterion) {
    let (train, _) = xids_bench::table(20, 1);
    let mut g = c.benchmark_group("forest");
    g.sample_size(10);
    g.bench_function("train_100_trees_3000_rows", |b| {
        b.iter(|| train_random_forest(black_box(&train), &ForestParams::default()).unwrap())
    });
    g.finish();
}

fn shapley(c: &mut Criterion) {
    let mut g = c.benchmark_group("shap");
    g.sample_size(10);
    let small = fixture(10, 100, 2);
    let inst = small.instance(0);
    g.bench_function("exact_p10_bg50", |b| {
        b.iter(|| shap_exact(&small.forest, black_box(&inst), &small.background).unwrap())
    });
    let full = fixture(20, 100, 2);
    let inst = full.instance(0);
    g.bench_function("sampled_p20_500_permutations", |b| {
        b.iter(|| {
            shap_sampled(
                &full.forest,
                black_box(&inst),
                &full.background,
                &SampledConfig {
                    n_permutations: 500,
                    ..Default::default()
                },
            )
            .unwrap()
        })
    });
    g.finish();
}

fn lime(c: &mut Criterion) {
    let f = fixture(20, 100, 3);
    let inst = f.instance(0);
    let mut g = c.benchmark_group("lime");
    g.sample_size(10);
    g.bench_function("5000_perturbations_k10", |b| {
        b.iter(|| {
            explain_lime(
                &f.forest,
                black_box(&inst),
                &f.stats,
                &LimeConfig::default(),
                None,
            )
            .unwrap()
        })
    });
    g.finish();
}

fn dice(c: &mut Criterion) {
    let f = fixture(20, 100, 4);
    let query = CounterfactualQuery::new(f.instance(0), Default::default());
    let mut g = c.benchmark_group("dice");
    g.sample_size(10);
    g.bench_function("k3_default_budget", |b| {
        b.iter(|| generate_counterfactuals(&f.forest, black_box(&query)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, forest_training, shapley, lime, dice);
criterion_main!(benches);
