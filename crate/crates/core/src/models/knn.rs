use serde::{Deserialize, Serialize};

use super::{training_data, Classifier, ModelParams, TrainedModel};
use crate::error::{Error, Result};
use crate::resample::sq_dist;
use crate::tabular::FeatureTable;

/// k-nearest-neighbour vote over a stored training matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl KnnModel {
    /// Indices of the k nearest rows; distance ties go to the lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (sq_dist(x, r), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }
}

impl Classifier for KnnModel {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let nn = self.neighbors(x);
        let ones = nn.iter().filter(|&&i| self.labels[i] == 1).count();
        let p1 = ones as f64 / nn.len() as f64;
        [1.0 - p1, p1]
    }
}

pub fn train_knn(train: &FeatureTable, k: usize) -> Result<TrainedModel> {
    let (rows, labels) = training_data(train)?;
    if k == 0 || k > rows.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be in 1..={}",
            rows.len()
        )));
    }
    let degenerate = labels.iter().all(|&c| c == labels[0]);
    Ok(TrainedModel::new(
        train.column_names().to_vec(),
        degenerate,
        ModelParams::Knn(KnnModel { k, rows, labels }),
    ))
}
