//! L2-regularised logistic regression, full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{bce_from_logit, sigmoid, training_data, Classifier, ModelParams, TrainedModel};
use crate::error::{Error, Result};
use crate::tabular::FeatureTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.1,
            epochs: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Loss before training followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(p: usize) -> Self {
        Self {
            weights: vec![0.0; p],
            bias: 0.0,
            loss_history: Vec::new(),
        }
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

impl Classifier for LogisticModel {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let p = sigmoid(self.logit(x));
        [1.0 - p, p]
    }
}

/// Mean log-loss plus `l2/2·‖w‖²` and its gradient `(∂w, ∂b)`.
pub fn loss_and_grad(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[u8],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = bias + weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
        loss += bce_from_logit(z, label);
        let r = sigmoid(z) - f64::from(label);
        gb += r;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + reg, gw, gb / n)
}

/// Weights start at zero; the loss must not rise between epochs (1e-9 slack).
pub fn train_logistic_regression(
    train: &FeatureTable,
    params: &LogisticParams,
) -> Result<TrainedModel> {
    if !(params.learning_rate > 0.0) || params.l2 < 0.0 {
        return Err(Error::InvalidParameter(
            "learning_rate must be > 0 and l2 ≥ 0".into(),
        ));
    }
    let (x, y) = training_data(train)?;
    let degenerate = y.iter().all(|&c| c == y[0]);
    let mut m = LogisticModel::zeros(train.n_features());
    let (mut loss, mut gw, mut gb) = loss_and_grad(&m.weights, m.bias, &x, &y, params.l2);
    m.loss_history.push(loss);
    for epoch in 1..=params.epochs {
        for (w, g) in m.weights.iter_mut().zip(&gw) {
            *w -= params.learning_rate * g;
        }
        m.bias -= params.learning_rate * gb;
        let next = loss_and_grad(&m.weights, m.bias, &x, &y, params.l2);
        if !next.0.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss at epoch {epoch}"
            )));
        }
        if next.0 > loss + 1e-9 {
            return Err(Error::LossIncreased {
                epoch,
                before: loss,
                after: next.0,
            });
        }
        (loss, gw, gb) = next;
        m.loss_history.push(loss);
    }
    Ok(TrainedModel::new(
        train.column_names().to_vec(),
        degenerate,
        ModelParams::LogisticRegression(m),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tabular::ClassLabel;
    use rand::Rng as _;

    fn table(x: &[Vec<f64>], y: &[u8]) -> FeatureTable {
        FeatureTable::from_rows(
            (0..x[0].len()).map(|j| format!("f{j}")).collect(),
            x,
            "Label",
            y.iter()
                .map(|&b| ClassLabel {
                    raw: b.to_string(),
                    binary: Some(b),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_predict_half() {
        let m = LogisticModel::zeros(3);
        assert_eq!(m.predict_proba(&[5.0, -2.0, 9.0]), [0.5, 0.5]);
    }

    #[test]
    fn separates_one_dimensional_data() {
        let x: Vec<Vec<f64>> = (-20..=20)
            .filter(|&i| i != 0)
            .map(|i| vec![i as f64 / 20.0])
            .collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let params = LogisticParams {
            learning_rate: 0.5,
            epochs: 500,
            ..Default::default()
        };
        let m = train_logistic_regression(&table(&x, &y), &params).unwrap();
        assert!(x.iter().zip(&y).all(|(r, &c)| m.predict(r) == c));
        let h = m.loss_history().unwrap();
        assert_eq!(h.len(), 501);
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seeded(3);
        let x: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<u8> = (0..30).map(|_| rng.random_range(0..2)).collect();
        for _ in 0..10 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let l2 = 0.01;
            let (_, gw, gb) = loss_and_grad(&w, b, &x, &y, l2);
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            for j in 0..=4 {
                let f = |d: f64| {
                    let mut w2 = w.clone();
                    let mut b2 = b;
                    if j < 4 {
                        w2[j] += d;
                    } else {
                        b2 += d;
                    }
                    loss_and_grad(&w2, b2, &x, &y, l2).0
                };
                let numeric = (f(h) - f(-h)) / (2.0 * h);
                let analytic = if j < 4 { gw[j] } else { gb };
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
                max_rel = max_rel.max(rel);
            }
            assert!(max_rel < 1e-6, "max relative error {max_rel}");
        }
    }

    #[test]
    fn huge_learning_rate_is_rejected() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 3 == 0)).collect();
        let params = LogisticParams {
            learning_rate: 50.0,
            epochs: 50,
            ..Default::default()
        };
        let err = train_logistic_regression(&table(&x, &y), &params).unwrap_err();
        assert!(
            matches!(err, Error::LossIncreased { .. } | Error::Divergence(_)),
            "{err}"
        );
    }
}
