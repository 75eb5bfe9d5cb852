use proptest::prelude::*;

use xids_core::models::{train_random_forest, ForestParams};
use xids_core::resample::smote_upsample;
use xids_core::shap::{shap_exact, BackgroundSet};
use xids_core::tabular::{
    apply_scaler, clean, fit_scaler, invert_scaler, ClassLabel, FeatureTable, Instance,
};

fn table_strategy() -> impl Strategy<Value = FeatureTable> {
    (1usize..6, 3usize..40).prop_flat_map(|(p, n)| {
        (
            prop::collection::vec(prop::collection::vec(-1e4f64..1e4, p), n),
            prop::collection::vec(0u8..3, n),
        )
            .prop_map(move |(rows, y)| {
                let names = (0..p).map(|j| format!("c{j}")).collect();
                let labels = y.iter().map(|c| ClassLabel::raw(format!("k{c}"))).collect();
                FeatureTable::from_rows(names, &rows, "Label", labels).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaler_round_trip(t in table_strategy()) {
        // constant columns cannot be scaled
        prop_assume!(t.columns().iter().all(|c| c.iter().any(|v| *v != c[0])));
        let params = fit_scaler(&t).unwrap();
        let scaled = apply_scaler(&t, &params).unwrap();
        for col in scaled.columns() {
            for v in col {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
            }
        }
        let back = invert_scaler(&scaled, &params).unwrap();
        for (a, b) in t.columns().iter().zip(back.columns()) {
            let span = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-12 * span, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn clean_is_idempotent(t in table_strategy(), dup in 0usize..5) {
        let extra: Vec<Vec<f64>> = (0..dup.min(t.n_rows())).map(|i| t.row(i)).collect();
        let n_extra = extra.len();
        let labels = t.labels()[..n_extra].to_vec();
        let t = t.append_rows(&extra, labels).unwrap();
        let (once, r1) = clean(&t).unwrap();
        let (twice, r2) = clean(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(r1.dropped_duplicate_rows >= n_extra);
        prop_assert_eq!(r2.dropped_duplicate_rows, 0);
    }

    #[test]
    fn smote_rows_are_convex_combinations(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 2..15),
        extra in 1usize..30,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let labels = vec![ClassLabel::raw("m"); n];
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let t = FeatureTable::from_rows(names, &rows, "Label", labels).unwrap();
        let (out, prov) = smote_upsample(&t, "m", n + extra, 5, seed).unwrap();
        prop_assert_eq!(out.n_rows(), n + extra);
        for s in &prov.rows {
            let (x, nb, z) = (out.row(s.source), out.row(s.neighbor), out.row(s.row));
            prop_assert!((0.0..=1.0).contains(&s.u));
            for j in 0..3 {
                prop_assert_eq!(z[j], x[j] + s.u * (nb[j] - x[j]));
                let (lo, hi) = (x[j].min(nb[j]), x[j].max(nb[j]));
                prop_assert!(z[j] >= lo - 1e-15 && z[j] <= hi + 1e-15);
            }
        }
    }
}

#[test]
fn exact_shapley_efficiency_on_forest() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let a = (i % 10) as f64 / 10.0;
        let b = (i / 10 % 10) as f64 / 10.0;
        let c = ((i * 7) % 13) as f64 / 13.0;
        rows.push(vec![a, b, c]);
        labels.push(ClassLabel {
            raw: String::new(),
            binary: Some(u8::from(a + b > 0.9)),
        });
    }
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let t = FeatureTable::from_rows(names.clone(), &rows, "Label", labels).unwrap();
    let model = train_random_forest(
        &t,
        &ForestParams {
            n_trees: 20,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let bg = BackgroundSet::subsample(&t, 30, 1).unwrap();
    for i in (0..200).step_by(17) {
        let inst = Instance::new(format!("r{i}"), names.clone(), rows[i].clone());
        let a = shap_exact(&model, &inst, &bg).unwrap();
        assert!(a.efficiency_gap().abs() < 1e-12);
    }
}
