//! Shapley-value attribution with an interventional value function.
//!
//! `f(S)` is the model's class-1 probability averaged over background rows,
//! each row patched with the instance's values on the features in `S`.
//! [`shap_exact`] enumerates every coalition; [`shap_sampled`] averages
//! marginal contributions over random feature orderings.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng::substream;
use crate::tabular::{FeatureTable, Instance};
use crate::SCHEMA_VERSION;

/// Reference rows standing in for "absent" features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyBackground);
        }
        if let Some(r) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::Shape(format!(
                "background row has {} values for {} features",
                r.len(),
                feature_names.len()
            )));
        }
        Ok(Self {
            feature_names,
            rows,
        })
    }

    pub fn from_table(table: &FeatureTable) -> Result<Self> {
        Self::new(table.column_names().to_vec(), table.rows())
    }

    /// At most `max_rows` rows drawn without replacement. When labels are
    /// binarized the draw is stratified so the class ratio is kept.
    pub fn subsample(table: &FeatureTable, max_rows: usize, seed: u64) -> Result<Self> {
        let n = table.n_rows();
        if n <= max_rows {
            return Self::from_table(table);
        }
        let groups: Vec<Vec<usize>> = match table.binary_labels() {
            Ok(y) => [0u8, 1]
                .iter()
                .map(|&c| (0..n).filter(|&i| y[i] == c).collect())
                .collect(),
            Err(_) => vec![(0..n).collect()],
        };
        let mut keep = Vec::with_capacity(max_rows);
        let mut remaining = max_rows;
        let mut left = n;
        for (g, mut members) in groups.into_iter().enumerate() {
            let take = if left == members.len() {
                remaining
            } else {
                (members.len() as f64 * max_rows as f64 / n as f64).round() as usize
            }
            .min(remaining)
            .min(members.len());
            members.shuffle(&mut substream(seed, g as u64));
            keep.extend_from_slice(&members[..take]);
            remaining -= take;
            left -= members.len();
        }
        keep.sort_unstable();
        Self::from_table(&table.select_rows(&keep))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub feature: String,
    /// Instance value as seen by the model.
    pub value: f64,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub schema_version: u32,
    pub instance_id: String,
    /// Mean class-1 probability over the background.
    pub base_value: f64,
    /// Class-1 probability at the instance.
    pub prediction: f64,
    pub method: ShapMethod,
    /// Coalitions (exact) or permutations (sampled) evaluated.
    pub n_samples: usize,
    /// A non-zero sampling residual was spread over features so that
    /// `base + Σφ = prediction`; the spread is proportional to standard errors.
    #[serde(default)]
    pub efficiency_adjusted: bool,
    pub phi: Vec<FeatureAttribution>,
}

impl Attribution {
    pub fn phi_values(&self) -> Vec<f64> {
        self.phi.iter().map(|f| f.phi).collect()
    }

    pub fn phi_of(&self, feature: &str) -> Option<f64> {
        self.phi
            .iter()
            .find(|f| f.feature == feature)
            .map(|f| f.phi)
    }

    /// `base + Σφ − prediction`.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.phi.iter().map(|f| f.phi).sum::<f64>() - self.prediction
    }
}

fn check_schema(instance: &Instance, background: &BackgroundSet) -> Result<()> {
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if instance.feature_names != background.feature_names {
        return Err(Error::SchemaMismatch(
            "instance and background features differ".into(),
        ));
    }
    Ok(())
}

/// Value of a coalition given as a membership mask.
fn value_mask<M: Classifier + ?Sized>(
    model: &M,
    instance: &[f64],
    mask: &[bool],
    background: &BackgroundSet,
) -> f64 {
    if mask.iter().all(|&m| m) {
        return model.predict_proba(instance)[1];
    }
    let mut hybrid = vec![0.0; instance.len()];
    let mut total = 0.0;
    for row in &background.rows {
        for (j, h) in hybrid.iter_mut().enumerate() {
            *h = if mask[j] { instance[j] } else { row[j] };
        }
        total += model.predict_proba(&hybrid)[1];
    }
    total / background.len() as f64
}

/// `f(S)` for the features at indices `subset`.
pub fn value_function<M: Classifier + ?Sized>(
    model: &M,
    instance: &Instance,
    subset: &[usize],
    background: &BackgroundSet,
) -> Result<f64> {
    check_schema(instance, background)?;
    let mut mask = vec![false; instance.len()];
    for &j in subset {
        if j >= mask.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: mask.len(),
            });
        }
        mask[j] = true;
    }
    Ok(value_mask(model, &instance.values, &mask, background))
}

/// Enumeration needs `2^p · B` model calls, so `p` is capped.
pub const DEFAULT_EXACT_CAP: usize = 15;

pub fn shap_exact<M: Classifier + ?Sized>(
    model: &M,
    instance: &Instance,
    background: &BackgroundSet,
) -> Result<Attribution> {
    shap_exact_capped(model, instance, background, DEFAULT_EXACT_CAP)
}

/// Exact Shapley values:
/// `φ_i = Σ_{S ⊆ P∖{i}} |S|!(p−|S|−1)!/p! · (f(S∪{i}) − f(S))`.
pub fn shap_exact_capped<M: Classifier + ?Sized>(
    model: &M,
    instance: &Instance,
    background: &BackgroundSet,
    cap: usize,
) -> Result<Attribution> {
    check_schema(instance, background)?;
    let p = instance.len();
    if p > cap || p >= 31 {
        return Err(Error::TooManyFeatures { p, cap });
    }
    let n_masks = 1usize << p;
    let mut values = vec![0.0; n_masks];
    let mut mask = vec![false; p];
    for (bits, v) in values.iter_mut().enumerate() {
        for (j, m) in mask.iter_mut().enumerate() {
            *m = bits >> j & 1 == 1;
        }
        *v = value_mask(model, &instance.values, &mask, background);
    }

    // |S|!(p-|S|-1)!/p! = 1 / (p · C(p-1, |S|))
    let weights: Vec<f64> = (0..p)
        .map(|s| 1.0 / (p as f64 * binomial(p - 1, s)))
        .collect();
    let mut phi = vec![0.0; p];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for bits in (0..n_masks).filter(|b| b & bit == 0) {
            let s = bits.count_ones() as usize;
            *phi_i += weights[s] * (values[bits | bit] - values[bits]);
        }
    }
    Ok(Attribution {
        schema_version: SCHEMA_VERSION,
        instance_id: instance.id.clone(),
        base_value: values[0],
        prediction: values[n_masks - 1],
        method: ShapMethod::Exact,
        n_samples: n_masks,
        efficiency_adjusted: false,
        phi: build_phi(instance, &phi, None),
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn build_phi(instance: &Instance, phi: &[f64], se: Option<&[f64]>) -> Vec<FeatureAttribution> {
    instance
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureAttribution {
            feature: name.clone(),
            value: instance.values[j],
            phi: phi[j],
            std_error: se.map(|s| s[j]),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampledConfig {
    pub n_permutations: usize,
    pub seed: u64,
    /// Spread any efficiency residual over features.
    pub enforce_efficiency: bool,
}

impl Default for SampledConfig {
    fn default() -> Self {
        Self {
            n_permutations: 1000,
            seed: 0,
            enforce_efficiency: true,
        }
    }
}

/// Permutation-sampling estimate of the Shapley values, with per-feature
/// standard errors. Coalition values are memoised, so repeated prefixes
/// cost nothing extra.
pub fn shap_sampled<M: Classifier + ?Sized>(
    model: &M,
    instance: &Instance,
    background: &BackgroundSet,
    config: &SampledConfig,
) -> Result<Attribution> {
    check_schema(instance, background)?;
    if config.n_permutations == 0 {
        return Err(Error::InvalidParameter("n_permutations must be ≥ 1".into()));
    }
    let p = instance.len();
    let words = p.div_ceil(64).max(1);
    let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut eval = |key: &[u64], mask: &[bool]| -> f64 {
        if let Some(&v) = cache.get(key) {
            return v;
        }
        let v = value_mask(model, &instance.values, mask, background);
        cache.insert(key.to_vec(), v);
        v
    };

    let empty_key = vec![0u64; words];
    let base = eval(&empty_key, &vec![false; p]);
    let prediction = model.predict_proba(&instance.values)[1];

    // Welford accumulators
    let mut mean = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    for k in 0..config.n_permutations {
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, k as u64));
        let mut key = empty_key.clone();
        let mut mask = vec![false; p];
        let mut prev = base;
        let count = (k + 1) as f64;
        for &j in &order {
            key[j / 64] |= 1 << (j % 64);
            mask[j] = true;
            let cur = eval(&key, &mask);
            let marginal = cur - prev;
            prev = cur;
            let delta = marginal - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (marginal - mean[j]);
        }
    }
    let n = config.n_permutations as f64;
    let se: Vec<f64> = m2
        .iter()
        .map(|&s| {
            if config.n_permutations > 1 {
                (s / (n - 1.0) / n).sqrt()
            } else {
                0.0
            }
        })
        .collect();

    let mut phi = mean;
    let residual = (prediction - base) - phi.iter().sum::<f64>();
    let mut adjusted = false;
    if config.enforce_efficiency && residual != 0.0 {
        let total_se: f64 = se.iter().sum();
        for (f, s) in phi.iter_mut().zip(&se) {
            *f += if total_se > 0.0 {
                residual * s / total_se
            } else {
                residual / p as f64
            };
        }
        adjusted = true;
    }
    Ok(Attribution {
        schema_version: SCHEMA_VERSION,
        instance_id: instance.id.clone(),
        base_value: base,
        prediction,
        method: ShapMethod::Sampled,
        n_samples: config.n_permutations,
        efficiency_adjusted: adjusted,
        phi: build_phi(instance, &phi, Some(&se)),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
}

/// One bar of a force plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceBar {
    pub feature: String,
    pub value: f64,
    pub phi: f64,
    pub direction: Direction,
}

/// Non-zero contributions sorted by |φ| descending (ties by feature name).
/// Walking `base_value` through the bars in order ends at the prediction.
pub fn force_plot_data(attr: &Attribution) -> Vec<ForceBar> {
    let mut bars: Vec<ForceBar> = attr
        .phi
        .iter()
        .filter(|f| f.phi != 0.0)
        .map(|f| ForceBar {
            feature: f.feature.clone(),
            value: f.value,
            phi: f.phi,
            direction: if f.phi > 0.0 {
                Direction::Positive
            } else {
                Direction::Negative
            },
        })
        .collect();
    bars.sort_by(|a, b| {
        b.phi
            .abs()
            .total_cmp(&a.phi.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    bars
}
