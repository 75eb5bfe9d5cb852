//! Fixtures shared by the benchmarks: a synthetic IoMT-like table run
//! through cleaning, scaling and binarization, split, with a trained forest.

use xids_core::models::{train_random_forest, train_test_split, ForestParams};
use xids_core::shap::BackgroundSet;
use xids_core::synth::{generate, SynthConfig};
use xids_core::tabular::{apply_scaler, binarize_labels, clean, fit_scaler, LabelMap};
use xids_core::{FeatureTable, Instance, TrainStats, TrainedModel};

pub struct Fixture {
    pub train: FeatureTable,
    pub test: FeatureTable,
    pub forest: TrainedModel,
    pub background: BackgroundSet,
    pub stats: TrainStats,
}

impl Fixture {
    pub fn instance(&self, i: usize) -> Instance {
        self.test
            .instance(i, format!("test_{i}"))
            .expect("row in range")
    }
}

/// Scaled, binarized and split synthetic table with `p` features.
pub fn table(p: usize, seed: u64) -> (FeatureTable, FeatureTable) {
    let raw = generate(&SynthConfig {
        n_informative: p,
        signature_size: p.min(6),
        seed,
        ..Default::default()
    })
    .expect("valid generator settings");
    let (table, _) = clean(&raw).expect("clean");
    let scaler = fit_scaler(&table).expect("scaler");
    let table = apply_scaler(&table, &scaler).expect("scale");
    let table = binarize_labels(&table, &LabelMap::infer(&table, "Normal")).expect("labels");
    train_test_split(&table, 0.25, true, seed).expect("split")
}

pub fn fixture(p: usize, n_trees: usize, seed: u64) -> Fixture {
    let (train, test) = table(p, seed);
    let forest = train_random_forest(
        &train,
        &ForestParams {
            n_trees,
            seed,
            ..Default::default()
        },
    )
    .expect("forest");
    let background = BackgroundSet::subsample(&train, 50, seed).expect("background");
    let stats = TrainStats::from_table(&train).expect("stats");
    Fixture {
        train,
        test,
        forest,
        background,
        stats,
    }
}
