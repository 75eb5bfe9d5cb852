//! Random forest of CART trees with Gini splits.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{training_data, Classifier, ModelParams, TrainedModel};
use crate::error::{Error, Result};
use crate::rng::{substream, Rng};
use crate::tabular::FeatureTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// `None` means ⌈√p⌉.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Fraction of class-1 samples that reached the leaf.
    Leaf { p1: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_p1(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { p1 } => return p1,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Classifier for RandomForest {
    fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let p1 = self.trees.iter().map(|t| t.leaf_p1(x)).sum::<f64>() / self.trees.len() as f64;
        [1.0 - p1, p1]
    }
}

pub fn train_random_forest(train: &FeatureTable, params: &ForestParams) -> Result<TrainedModel> {
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be ≥ 1".into()));
    }
    let (x, y) = training_data(train)?;
    let p = train.n_features();
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
    if mtry == 0 || mtry > p {
        return Err(Error::InvalidParameter(format!(
            "features_per_split {mtry} not in 1..={p}"
        )));
    }
    let degenerate = y.iter().all(|&c| c == y[0]);
    let n = x.len();
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = substream(params.seed, t as u64);
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&x, &y, samples, mtry, params, &mut rng)
        })
        .collect();
    Ok(TrainedModel::new(
        train.column_names().to_vec(),
        degenerate,
        ModelParams::RandomForest(RandomForest {
            params: params.clone(),
            trees,
        }),
    ))
}

fn gini(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (c0 as f64 / n, c1 as f64 / n);
    1.0 - a * a - b * b
}

struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn grow(
    x: &[Vec<f64>],
    y: &[u8],
    samples: Vec<usize>,
    mtry: usize,
    params: &ForestParams,
    rng: &mut Rng,
) -> Tree {
    let p = x[0].len();
    let mut nodes = Vec::new();
    // (node slot, samples, depth)
    let mut stack = vec![(0usize, samples, 0usize)];
    nodes.push(TreeNode::Leaf { p1: 0.0 });
    let mut features: Vec<usize> = (0..p).collect();

    while let Some((slot, idx, depth)) = stack.pop() {
        let c1 = idx.iter().filter(|&&i| y[i] == 1).count();
        let c0 = idx.len() - c1;
        let leaf = TreeNode::Leaf {
            p1: c1 as f64 / idx.len() as f64,
        };
        let pure = c0 == 0 || c1 == 0;
        let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < params.min_samples_split.max(2) {
            nodes[slot] = leaf;
            continue;
        }

        features.shuffle(rng);
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(idx.len());
        for &f in &features {
            if visited == mtry {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (x[i][f], y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            visited += 1;
            if let Some(c) = best_threshold(&pairs, c0, c1, f) {
                let better = match &best {
                    None => true,
                    Some(b) => (c.impurity, c.feature) < (b.impurity, b.feature),
                };
                if better {
                    best = Some(c);
                }
            }
        }

        let Some(split) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| x[i][split.feature] <= split.threshold);
        let l = nodes.len();
        nodes.push(TreeNode::Leaf { p1: 0.0 });
        nodes.push(TreeNode::Leaf { p1: 0.0 });
        nodes[slot] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

/// Lowest weighted child Gini over all cut points of sorted `pairs`.
fn best_threshold(pairs: &[(f64, u8)], c0: usize, c1: usize, feature: usize) -> Option<Candidate> {
    let n = pairs.len();
    let mut l0 = 0;
    let mut l1 = 0;
    let mut best: Option<Candidate> = None;
    for i in 0..n - 1 {
        if pairs[i].1 == 1 {
            l1 += 1;
        } else {
            l0 += 1;
        }
        let (a, b) = (pairs[i].0, pairs[i + 1].0);
        if a == b {
            continue;
        }
        let nl = (l0 + l1) as f64;
        let nr = (n - l0 - l1) as f64;
        let impurity = (nl * gini(l0, l1) + nr * gini(c0 - l0, c1 - l1)) / n as f64;
        if best.as_ref().is_none_or(|b| impurity < b.impurity) {
            let mid = a + (b - a) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best = Some(Candidate {
                impurity,
                feature,
                threshold,
            });
        }
    }
    best
}
