//! Binary classifiers trained from scratch, plus evaluation and splitting.
//!
//! All explainers only need [`Classifier::predict_proba`]; [`TrainedModel`]
//! is the serializable wrapper the pipeline stores between invocations.

mod dense;
mod forest;
mod knn;
mod logistic;
mod metrics;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::FeatureTable;
use crate::SCHEMA_VERSION;

pub use dense::{train_dense_net, DenseLayer, DenseNet, DenseNetParams};
pub use forest::{train_random_forest, ForestParams, RandomForest, Tree, TreeNode};
pub use knn::{train_knn, KnnModel};
pub use logistic::{train_logistic_regression, LogisticModel, LogisticParams};
pub use metrics::{evaluate, evaluate_predictions, ClassMetrics, EvalReport};
pub use split::train_test_split;

/// Two-class probabilistic model.
pub trait Classifier {
    /// `[P(class 0), P(class 1)]`, non-negative and summing to one.
    fn predict_proba(&self, x: &[f64]) -> [f64; 2];

    /// Argmax of [`predict_proba`](Self::predict_proba); ties go to class 0.
    fn predict(&self, x: &[f64]) -> u8 {
        let p = self.predict_proba(x);
        u8::from(p[1] > p[0])
    }
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        (**self).predict_proba(x)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        (**self).predict_proba(x)
    }
}

/// Adapts a closure returning P(class 1) into a [`Classifier`]. Outputs are
/// clamped into [0, 1].
pub struct FnClassifier<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Classifier for FnClassifier<F> {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let p = (self.0)(x).clamp(0.0, 1.0);
        [1.0 - p, p]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    LogisticRegression,
    Knn,
    DenseNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::LogisticRegression,
        ModelKind::DenseNet,
        ModelKind::RandomForest,
        ModelKind::Knn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "Random Forest",
            ModelKind::LogisticRegression => "Logistic Regression",
            ModelKind::Knn => "K-Nearest Neighbor",
            ModelKind::DenseNet => "Dense Net",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    RandomForest(RandomForest),
    LogisticRegression(LogisticModel),
    Knn(KnnModel),
    DenseNet(DenseNet),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    /// Training data held a single class; the model predicts it everywhere.
    #[serde(default)]
    pub degenerate: bool,
    pub model: ModelParams,
}

impl TrainedModel {
    pub fn new(feature_names: Vec<String>, degenerate: bool, model: ModelParams) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            feature_names,
            degenerate,
            model,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
            ModelParams::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::DenseNet(_) => ModelKind::DenseNet,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Training loss per epoch for the gradient-trained kinds.
    pub fn loss_history(&self) -> Option<&[f64]> {
        match &self.model {
            ModelParams::LogisticRegression(m) => Some(&m.loss_history),
            ModelParams::DenseNet(m) => Some(&m.loss_history),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "model schema_version {} (expected {SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }

    /// Fails unless `names` equals the model's feature order.
    pub fn check_features(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            return Err(Error::SchemaMismatch(
                "table columns differ from model features".into(),
            ));
        }
        Ok(())
    }
}

impl Classifier for TrainedModel {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        match &self.model {
            ModelParams::RandomForest(m) => m.predict_proba(x),
            ModelParams::LogisticRegression(m) => m.predict_proba(x),
            ModelParams::Knn(m) => m.predict_proba(x),
            ModelParams::DenseNet(m) => m.predict_proba(x),
        }
    }
}

/// Row-major features and binary labels, validated for training.
pub(crate) fn training_data(table: &FeatureTable) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    if table.n_rows() == 0 {
        return Err(Error::EmptyTable);
    }
    let y = table.binary_labels()?;
    let x = table.rows();
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Shape(
            "training data contains non-finite values".into(),
        ));
    }
    Ok((x, y))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from a logit, stable for large |z|.
pub(crate) fn bce_from_logit(z: f64, y: u8) -> f64 {
    // softplus(z) - y*z
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - f64::from(y) * z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_ties_go_to_zero() {
        let m = FnClassifier(|_: &[f64]| 0.5);
        assert_eq!(m.predict(&[0.0]), 0);
        let m = FnClassifier(|_: &[f64]| 0.5000001);
        assert_eq!(m.predict(&[0.0]), 1);
    }

    #[test]
    fn bce_matches_naive() {
        for &z in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            let p = sigmoid(z);
            assert!((bce_from_logit(z, 1) + p.ln()).abs() < 1e-12);
            assert!((bce_from_logit(z, 0) + (1.0 - p).ln()).abs() < 1e-12);
        }
        assert!(bce_from_logit(800.0, 1).abs() < 1e-12);
        assert!(bce_from_logit(-800.0, 0).abs() < 1e-12);
    }
}
