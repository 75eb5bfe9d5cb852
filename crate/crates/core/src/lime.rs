//! Local linear surrogates.
//!
//! Samples are drawn feature-wise from the training distribution, weighted
//! by an exponential kernel on their distance to the instance, and a sparse
//! weighted ridge model is fit to the black box's probability for the
//! predicted class. Sparsity comes from greedy forward selection.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::resample::sq_dist;
use crate::rng::seeded;
use crate::tabular::{FeatureTable, Instance, ScalerParams};
use crate::SCHEMA_VERSION;

/// Per-feature mean and (population) standard deviation of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TrainStats {
    pub fn from_table(table: &FeatureTable) -> Result<Self> {
        if table.n_rows() == 0 {
            return Err(Error::EmptyTable);
        }
        let n = table.n_rows() as f64;
        let mut mean = Vec::with_capacity(table.n_features());
        let mut std = Vec::with_capacity(table.n_features());
        for col in table.columns() {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt());
        }
        Ok(Self {
            feature_names: table.column_names().to_vec(),
            mean,
            std,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// Maximum number of features in the surrogate.
    pub k_features: usize,
    pub ridge: f64,
    /// `None` uses `0.75·√p`.
    pub kernel_width: Option<f64>,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 5000,
            k_features: 10,
            ridge: 1e-3,
            kernel_width: None,
            seed: 0,
        }
    }
}

pub fn default_kernel_width(p: usize) -> f64 {
    0.75 * (p as f64).sqrt()
}

/// `exp(−d²/σ²)`.
pub fn kernel(dist_sq: f64, width: f64) -> f64 {
    (-dist_sq / (width * width)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSet {
    /// Row 0 is the instance itself.
    pub samples: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kernel_width: f64,
}

pub fn perturb(
    instance: &Instance,
    stats: &TrainStats,
    n: usize,
    kernel_width: Option<f64>,
    seed: u64,
) -> Result<PerturbationSet> {
    if n < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 perturbations, got {n}"
        )));
    }
    if instance.feature_names != stats.feature_names {
        return Err(Error::SchemaMismatch(
            "instance and training statistics features differ".into(),
        ));
    }
    let normals = stats
        .mean
        .iter()
        .zip(&stats.std)
        .zip(&stats.feature_names)
        .map(|((&m, &s), name)| {
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "feature {name:?} has zero standard deviation"
                )));
            }
            Ok(Normal::new(m, s).expect("positive std"))
        })
        .collect::<Result<Vec<_>>>()?;
    let width = kernel_width.unwrap_or_else(|| default_kernel_width(instance.len()));
    if !(width > 0.0) {
        return Err(Error::InvalidParameter("kernel width must be > 0".into()));
    }

    let mut rng = seeded(seed);
    let mut samples = Vec::with_capacity(n);
    samples.push(instance.values.clone());
    for _ in 1..n {
        samples.push(normals.iter().map(|d| d.sample(&mut rng)).collect());
    }
    let weights = samples
        .iter()
        .map(|z| kernel(sq_dist(&instance.values, z), width))
        .collect();
    Ok(PerturbationSet {
        samples,
        weights,
        kernel_width: width,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateWeight {
    pub feature: String,
    pub weight: f64,
    /// Instance value for display (unscaled when a scaler was supplied).
    pub instance_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateExplanation {
    pub schema_version: u32,
    pub instance_id: String,
    pub predicted_class: u8,
    pub class_probabilities: [f64; 2],
    pub intercept: f64,
    /// Sorted by |weight| descending.
    pub weights: Vec<SurrogateWeight>,
    pub kernel_width: f64,
    pub n_perturbations: usize,
    /// Weighted R² of the surrogate on the perturbation set.
    pub local_fidelity: f64,
    /// Surrogate output at the instance.
    pub surrogate_prediction: f64,
    /// Ridge penalty actually used (raised if the system was singular).
    pub ridge: f64,
    pub seed: u64,
}

impl SurrogateExplanation {
    pub fn weight_of(&self, feature: &str) -> Option<f64> {
        self.weights
            .iter()
            .find(|w| w.feature == feature)
            .map(|w| w.weight)
    }

    /// Black-box probability of the predicted class at the instance.
    pub fn model_prediction(&self) -> f64 {
        self.class_probabilities[self.predicted_class as usize]
    }
}

/// Weighted, centred normal-equation pieces shared by every candidate fit.
struct Moments {
    x_mean: Vec<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl Moments {
    fn new(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Self {
        let p = x[0].len();
        let sw: f64 = w.iter().sum();
        let mut x_mean = vec![0.0; p];
        let mut y_mean = 0.0;
        for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
            for (m, v) in x_mean.iter_mut().zip(row) {
                *m += wi * v;
            }
            y_mean += wi * yi;
        }
        x_mean.iter_mut().for_each(|m| *m /= sw);
        y_mean /= sw;

        let mut gram = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut yty = 0.0;
        let mut xc = vec![0.0; p];
        for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
            for (c, (v, m)) in xc.iter_mut().zip(row.iter().zip(&x_mean)) {
                *c = v - m;
            }
            let yc = yi - y_mean;
            yty += wi * yc * yc;
            for a in 0..p {
                let wa = wi * xc[a];
                xty[a] += wa * yc;
                for b in a..p {
                    gram[(a, b)] += wa * xc[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        Self {
            x_mean,
            y_mean,
            gram,
            xty,
            yty,
        }
    }

    /// Ridge coefficients on `features`; the penalty escalates by decades
    /// up to 0.1 if the system is singular.
    fn solve(&self, features: &[usize], ridge: f64) -> Result<(DVector<f64>, f64)> {
        let k = features.len();
        let g = DMatrix::from_fn(k, k, |a, b| self.gram[(features[a], features[b])]);
        let rhs = DVector::from_fn(k, |a, _| self.xty[features[a]]);
        let mut lambda = ridge;
        loop {
            let a = &g + DMatrix::identity(k, k) * lambda;
            if let Some(ch) = a.cholesky() {
                let beta = ch.solve(&rhs);
                if beta.iter().all(|b| b.is_finite()) {
                    return Ok((beta, lambda));
                }
            }
            if lambda >= 1e-1 {
                return Err(Error::Singular(lambda));
            }
            lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
        }
    }

    /// Weighted SSE of a fit, from the moments.
    fn sse(&self, features: &[usize], beta: &DVector<f64>) -> f64 {
        let mut sse = self.yty;
        for (a, &fa) in features.iter().enumerate() {
            sse -= 2.0 * beta[a] * self.xty[fa];
            for (b, &fb) in features.iter().enumerate() {
                sse += beta[a] * beta[b] * self.gram[(fa, fb)];
            }
        }
        sse
    }
}

/// Fits the sparse surrogate on an existing perturbation set. The target is
/// the model's probability for the class it predicts at row 0.
pub fn fit_surrogate<M: Classifier + ?Sized>(
    instance: &Instance,
    set: &PerturbationSet,
    model: &M,
    k_features: usize,
    ridge: f64,
) -> Result<SurrogateExplanation> {
    let n = set.samples.len();
    if n <= k_features {
        return Err(Error::InvalidParameter(format!(
            "{n} perturbations cannot support {k_features} features"
        )));
    }
    if ridge < 0.0 {
        return Err(Error::InvalidParameter("ridge must be ≥ 0".into()));
    }
    let proba = model.predict_proba(&instance.values);
    let class = u8::from(proba[1] > proba[0]);
    let y: Vec<f64> = set
        .samples
        .iter()
        .map(|z| model.predict_proba(z)[class as usize])
        .collect();
    let moments = Moments::new(&set.samples, &y, &set.weights);
    let p = instance.len();

    let mut selected: Vec<usize> = Vec::new();
    let mut current_sse = moments.yty;
    while selected.len() < k_features.min(p) {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..p).filter(|j| !selected.contains(j)) {
            let mut trial = selected.clone();
            trial.push(j);
            let (beta, _) = moments.solve(&trial, ridge)?;
            let sse = moments.sse(&trial, &beta);
            if best.is_none_or(|(b, _)| sse < b) {
                best = Some((sse, j));
            }
        }
        let Some((sse, j)) = best else { break };
        if current_sse - sse <= 1e-12 * moments.yty {
            break;
        }
        selected.push(j);
        current_sse = sse;
    }

    let (beta, lambda) = if selected.is_empty() {
        (DVector::zeros(0), ridge)
    } else {
        moments.solve(&selected, ridge)?
    };
    let intercept = moments.y_mean
        - selected
            .iter()
            .enumerate()
            .map(|(a, &j)| beta[a] * moments.x_mean[j])
            .sum::<f64>();
    let predict = |z: &[f64]| {
        intercept
            + selected
                .iter()
                .enumerate()
                .map(|(a, &j)| beta[a] * z[j])
                .sum::<f64>()
    };

    let sw: f64 = set.weights.iter().sum();
    let y_bar = set.weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / sw;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for ((z, &yi), &wi) in set.samples.iter().zip(&y).zip(&set.weights) {
        let r = yi - predict(z);
        ss_res += wi * r * r;
        ss_tot += wi * (yi - y_bar) * (yi - y_bar);
    }
    let local_fidelity = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        f64::NEG_INFINITY
    };

    let mut weights: Vec<SurrogateWeight> = selected
        .iter()
        .enumerate()
        .map(|(a, &j)| SurrogateWeight {
            feature: instance.feature_names[j].clone(),
            weight: beta[a],
            instance_value: instance.values[j],
        })
        .collect();
    weights.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });

    Ok(SurrogateExplanation {
        schema_version: SCHEMA_VERSION,
        instance_id: instance.id.clone(),
        predicted_class: class,
        class_probabilities: proba,
        intercept,
        weights,
        kernel_width: set.kernel_width,
        n_perturbations: n,
        local_fidelity,
        surrogate_prediction: predict(&instance.values),
        ridge: lambda,
        seed: 0,
    })
}

/// Perturb, fit, and optionally map instance values back to raw units.
pub fn explain_lime<M: Classifier + ?Sized>(
    model: &M,
    instance: &Instance,
    stats: &TrainStats,
    config: &LimeConfig,
    display: Option<&ScalerParams>,
) -> Result<SurrogateExplanation> {
    let set = perturb(
        instance,
        stats,
        config.n_perturbations,
        config.kernel_width,
        config.seed,
    )?;
    let mut expl = fit_surrogate(instance, &set, model, config.k_features, config.ridge)?;
    expl.seed = config.seed;
    if let Some(scaler) = display {
        for w in &mut expl.weights {
            let r = scaler.range(&w.feature)?;
            w.instance_value = w.instance_value * (r.max - r.min) + r.min;
        }
    }
    Ok(expl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnClassifier;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }

    fn stats(p: usize) -> TrainStats {
        TrainStats {
            feature_names: names(p),
            mean: vec![0.5; p],
            std: vec![0.15; p],
        }
    }

    #[test]
    fn instance_weight_is_one_and_kernel_decreases() {
        let inst = Instance::new("i", names(3), vec![0.4, 0.5, 0.6]);
        let set = perturb(&inst, &stats(3), 50, None, 1).unwrap();
        assert_eq!(set.samples[0], inst.values);
        assert_eq!(set.weights[0], 1.0);
        let w = 1.3;
        let ds = [0.0, 0.1, 0.5, 1.0, 4.0, 9.0];
        assert!(ds.windows(2).all(|d| kernel(d[0], w) > kernel(d[1], w)));
    }

    #[test]
    fn perturbation_moments_match_stats() {
        let st = TrainStats {
            feature_names: names(3),
            mean: vec![0.2, 0.5, 0.8],
            std: vec![0.05, 0.1, 0.2],
        };
        let inst = Instance::new("i", names(3), vec![0.5; 3]);
        let set = perturb(&inst, &st, 10_000, None, 2).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = set.samples[1..].iter().map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64).sqrt();
            assert!((m - st.mean[j]).abs() <= 0.05 * st.mean[j], "mean {j}: {m}");
            assert!((s - st.std[j]).abs() <= 0.05 * st.std[j], "std {j}: {s}");
        }
    }

    #[test]
    fn rejects_zero_std_and_small_n() {
        let mut st = stats(2);
        let inst = Instance::new("i", names(2), vec![0.5; 2]);
        assert!(perturb(&inst, &st, 5, None, 0).is_err());
        st.std[1] = 0.0;
        assert!(perturb(&inst, &st, 50, None, 0).is_err());
    }

    #[test]
    fn constant_model_has_no_weights() {
        let model = FnClassifier(|_: &[f64]| 0.8);
        let inst = Instance::new("i", names(4), vec![0.5; 4]);
        let e = explain_lime(&model, &inst, &stats(4), &LimeConfig::default(), None).unwrap();
        assert!(e.weights.iter().all(|w| w.weight.abs() < 1e-6));
        assert!((e.intercept - 0.8).abs() < 1e-9);
        assert_eq!(e.predicted_class, 1);
    }

    #[test]
    fn recovers_linear_ramp() {
        let w = [0.06, -0.04, 0.03, 0.0, -0.05, 0.02];
        let model = FnClassifier(move |x: &[f64]| {
            0.55 + w.iter().zip(x).map(|(a, b)| a * (b - 0.5)).sum::<f64>()
        });
        let inst = Instance::new("i", names(6), vec![0.6, 0.4, 0.55, 0.5, 0.45, 0.5]);
        let cfg = LimeConfig {
            k_features: 6,
            seed: 4,
            ..Default::default()
        };
        let e = explain_lime(&model, &inst, &stats(6), &cfg, None).unwrap();
        assert_eq!(e.predicted_class, 1);
        for (j, &wj) in w.iter().enumerate() {
            let got = e.weight_of(&format!("f{j}")).unwrap_or(0.0);
            assert!(
                (got - wj).abs() <= 0.05 * wj.abs() + 1e-6,
                "f{j}: {got} vs {wj}"
            );
        }
        assert!(e.local_fidelity > 0.99);
        assert!((e.surrogate_prediction - e.model_prediction()).abs() < 1e-3);
    }

    #[test]
    fn orientation_follows_predicted_class() {
        // class 0 predicted: weights are for P(class 0), so signs flip
        let model = FnClassifier(|x: &[f64]| 0.3 + 0.1 * (x[0] - 0.5));
        let inst = Instance::new("i", names(2), vec![0.5, 0.5]);
        let e = explain_lime(&model, &inst, &stats(2), &LimeConfig::default(), None).unwrap();
        assert_eq!(e.predicted_class, 0);
        assert!((e.weight_of("f0").unwrap() + 0.1).abs() < 5e-3);
    }

    #[test]
    fn display_values_are_unscaled() {
        use crate::tabular::ColumnRange;
        let model = FnClassifier(|x: &[f64]| x[0]);
        let inst = Instance::new("i", names(1), vec![0.5]);
        let scaler = ScalerParams {
            columns: vec![ColumnRange {
                name: "f0".into(),
                min: 10.0,
                max: 20.0,
            }],
            clamp: false,
        };
        let e = explain_lime(
            &model,
            &inst,
            &stats(1),
            &LimeConfig::default(),
            Some(&scaler),
        )
        .unwrap();
        assert_eq!(e.weights[0].instance_value, 15.0);
    }
}
