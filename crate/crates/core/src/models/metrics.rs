use serde::{Deserialize, Serialize};

use super::{Classifier, TrainedModel};
use crate::error::{Error, Result};
use crate::tabular::FeatureTable;
use crate::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true samples of this class.
    pub support: usize,
    /// Precision or recall had a zero denominator and was set to 0.
    pub undefined: bool,
}

/// Classification metrics derived from a 2×2 confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub n: usize,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub per_class: [ClassMetrics; 2],
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

impl EvalReport {
    pub fn tp(&self) -> usize {
        self.confusion[1][1]
    }
    pub fn tn(&self) -> usize {
        self.confusion[0][0]
    }
    pub fn fp(&self) -> usize {
        self.confusion[0][1]
    }
    pub fn fn_(&self) -> usize {
        self.confusion[1][0]
    }
}

pub fn evaluate(model: &TrainedModel, test: &FeatureTable) -> Result<EvalReport> {
    model.check_features(test.column_names())?;
    let truth = test.binary_labels()?;
    let predicted: Vec<u8> = test.rows().iter().map(|r| model.predict(r)).collect();
    evaluate_predictions(&truth, &predicted)
}

pub fn evaluate_predictions(truth: &[u8], predicted: &[u8]) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::EmptyTable);
    }
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t as usize][p as usize] += 1;
    }
    let n = truth.len();
    let per_class = [0, 1].map(|c| {
        let tp = confusion[c][c];
        let predicted_c = confusion[0][c] + confusion[1][c];
        let support = confusion[c][0] + confusion[c][1];
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
            _ => 0.0,
        };
        ClassMetrics {
            precision: precision.unwrap_or(0.0),
            recall: recall.unwrap_or(0.0),
            f1,
            support,
            undefined: precision.is_none() || recall.is_none(),
        }
    });
    let macro_avg = |f: fn(&ClassMetrics) -> f64| (f(&per_class[0]) + f(&per_class[1])) / 2.0;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / n as f64
    };
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        n,
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / n as f64,
        precision_macro: macro_avg(|m| m.precision),
        recall_macro: macro_avg(|m| m.recall),
        f1_macro: macro_avg(|m| m.f1),
        precision_weighted: weighted(|m| m.precision),
        recall_weighted: weighted(|m| m.recall),
        f1_weighted: weighted(|m| m.f1),
        per_class,
        confusion,
    })
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}
