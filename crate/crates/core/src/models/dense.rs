//! Fully connected network: ReLU hidden layers, one sigmoid output unit,
//! trained with mini-batch SGD on binary cross-entropy.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{bce_from_logit, sigmoid, training_data, Classifier, ModelParams, TrainedModel};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tabular::FeatureTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenseNetParams {
    /// Widths after the input layer; the last must be 1.
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DenseNetParams {
    fn default() -> Self {
        Self {
            layers: vec![120, 80, 40, 20, 1],
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// `weights` is row-major `n_out × n_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
    /// Full-data loss before training, then after each epoch.
    pub loss_history: Vec<f64>,
}

impl DenseNet {
    /// He-initialised network (`N(0, 2/fan_in)` weights, zero biases).
    pub fn init(n_inputs: usize, widths: &[usize], seed: u64) -> Result<Self> {
        if widths.last() != Some(&1) || widths.contains(&0) || n_inputs == 0 {
            return Err(Error::InvalidParameter(format!(
                "layer widths {widths:?} must be ≥ 1 and end in 1"
            )));
        }
        let mut rng = substream(seed, u64::MAX);
        let mut layers = Vec::with_capacity(widths.len());
        let mut n_in = n_inputs;
        for &n_out in widths {
            let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
            layers.push(DenseLayer {
                n_in,
                n_out,
                weights: (0..n_in * n_out).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![0.0; n_out],
            });
            n_in = n_out;
        }
        Ok(Self {
            layers,
            loss_history: Vec::new(),
        })
    }

    /// Output-unit pre-activation.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if i < last {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(&l.weights);
            out.extend(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    /// Mean BCE over the batch and its gradient in [`params_flat`](Self::params_flat) order.
    pub fn loss_and_grad(&self, x: &[Vec<f64>], y: &[u8]) -> (f64, Vec<f64>) {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (row, &label) in x.iter().zip(y) {
            // activations[i] is the input to layer i
            let mut activations = vec![row.clone()];
            let mut pre = Vec::with_capacity(self.layers.len());
            for (i, layer) in self.layers.iter().enumerate() {
                let z = layer.forward(activations.last().expect("non-empty"));
                let a = if i < last {
                    z.iter().map(|v| v.max(0.0)).collect()
                } else {
                    z.clone()
                };
                pre.push(z);
                activations.push(a);
            }
            let z_out = pre[last][0];
            loss += bce_from_logit(z_out, label);

            let mut delta = vec![sigmoid(z_out) - f64::from(label)];
            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let input = &activations[i];
                let (gw, gb) = &mut grads[i];
                for o in 0..layer.n_out {
                    gb[o] += delta[o];
                    let row_g = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                    for (g, a) in row_g.iter_mut().zip(input) {
                        *g += delta[o] * a;
                    }
                }
                if i == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.n_in];
                for (d, w) in delta.iter().zip(layer.weights.chunks(layer.n_in)) {
                    for (p, wv) in prev.iter_mut().zip(w) {
                        *p += d * wv;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        let n = x.len() as f64;
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw.into_iter().map(|g| g / n));
            flat.extend(gb.into_iter().map(|g| g / n));
        }
        (loss / n, flat)
    }

    pub fn mean_loss(&self, x: &[Vec<f64>], y: &[u8]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(r, &c)| bce_from_logit(self.logit(r), c))
            .sum::<f64>()
            / x.len() as f64
    }
}

impl Classifier for DenseNet {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let p = sigmoid(self.logit(x));
        [1.0 - p, p]
    }
}

pub fn train_dense_net(train: &FeatureTable, params: &DenseNetParams) -> Result<TrainedModel> {
    if params.batch_size == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(
            "batch_size must be ≥ 1 and learning_rate > 0".into(),
        ));
    }
    let (x, y) = training_data(train)?;
    let degenerate = y.iter().all(|&c| c == y[0]);
    let mut net = DenseNet::init(train.n_features(), &params.layers, params.seed)?;
    net.loss_history.push(net.mean_loss(&x, &y));
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut flat = net.params_flat();
    for epoch in 0..params.epochs {
        let mut rng = substream(params.seed, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let bx: Vec<Vec<f64>> = batch.iter().map(|&i| x[i].clone()).collect();
            let by: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let (_, g) = net.loss_and_grad(&bx, &by);
            for (p, gv) in flat.iter_mut().zip(&g) {
                *p -= params.learning_rate * gv;
            }
            net.set_params_flat(&flat);
        }
        let loss = net.mean_loss(&x, &y);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss after epoch {}",
                epoch + 1
            )));
        }
        net.loss_history.push(loss);
    }
    Ok(TrainedModel::new(
        train.column_names().to_vec(),
        degenerate,
        ModelParams::DenseNet(net),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn zero_weights_output_sigmoid_of_bias() {
        let mut net = DenseNet::init(3, &[4, 2, 1], 1).unwrap();
        for l in &mut net.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        net.layers[2].bias[0] = 0.7;
        for x in [[0.0, 0.0, 0.0], [5.0, -3.0, 1.0]] {
            assert!((net.predict_proba(&x)[1] - sigmoid(0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(DenseNet::init(3, &[4, 2], 0).is_err());
        assert!(DenseNet::init(3, &[0, 1], 0).is_err());
    }

    #[test]
    fn gradient_check_4_3_1() {
        let mut rng = seeded(11);
        let x: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<u8> = (0..10).map(|_| rng.random_range(0..2)).collect();
        let mut worst: f64 = 0.0;
        for seed in 0..10 {
            let mut net = DenseNet::init(4, &[3, 1], seed).unwrap();
            let mut flat = net.params_flat();
            for v in flat.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
            net.set_params_flat(&flat);
            let (_, g) = net.loss_and_grad(&x, &y);
            let h = 1e-5;
            for j in 0..flat.len() {
                let mut probe = net.clone();
                let mut f = flat.clone();
                f[j] += h;
                probe.set_params_flat(&f);
                let up = probe.mean_loss(&x, &y);
                f[j] -= 2.0 * h;
                probe.set_params_flat(&f);
                let down = probe.mean_loss(&x, &y);
                let numeric = (up - down) / (2.0 * h);
                let rel = (numeric - g[j]).abs() / numeric.abs().max(g[j].abs()).max(1e-5);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
