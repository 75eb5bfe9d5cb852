//! Deterministic synthetic telemetry resembling medical-IoT network and host
//! records.
//!
//! Every feature is log-normal in a per-feature raw unit. Each attack class
//! shifts a seeded subset of features by a fixed number of standard
//! deviations of the underlying normal. Shift directions are drawn per class and feature, so attacks
//! surround the normal cluster and no single hyperplane isolates it.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tabular::{ClassLabel, FeatureTable};

pub const FEATURE_NAMES: [&str; 20] = [
    "SrcBytes",
    "DstBytes",
    "SrcLoad",
    "DstLoad",
    "SrcGap",
    "DstGap",
    "SIntPkt",
    "DIntPkt",
    "SrcJitter",
    "DstJitter",
    "sMaxPktSz",
    "dMaxPktSz",
    "Dur",
    "TotPkts",
    "Rate",
    "pLoss",
    "scputimes_user",
    "scputimes_system",
    "scputimes_idle",
    "svmem_percent",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Rows per raw class label; the first entry in name order need not be
    /// the normal class, see `normal_class`.
    pub class_counts: BTreeMap<String, usize>,
    pub normal_class: String,
    pub n_informative: usize,
    /// Features shifted per attack class.
    pub signature_size: usize,
    /// Shift in standard deviations of the underlying normal.
    pub shift: f64,
    /// Features are log-normal, `scale · exp(log_sigma · (z + shift))`, so
    /// byte- and rate-like columns get heavy right tails.
    pub log_sigma: f64,
    pub constant_columns: usize,
    /// Rows copied verbatim from the start of the table to the end.
    pub duplicate_rows: usize,
    /// Adds an all-missing column.
    pub missing_column: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let class_counts = [
            ("Normal", 2000),
            ("DDoS", 800),
            ("MitM", 400),
            ("Ransomware", 400),
            ("Buffer_Overflow", 400),
        ]
        .into_iter()
        .map(|(c, n)| (c.to_string(), n))
        .collect();
        Self {
            class_counts,
            normal_class: "Normal".into(),
            n_informative: 20,
            signature_size: 6,
            shift: 4.0,
            log_sigma: 0.6,
            constant_columns: 0,
            duplicate_rows: 0,
            missing_column: false,
            seed: 0,
        }
    }
}

pub fn feature_name(j: usize) -> String {
    FEATURE_NAMES
        .get(j)
        .map_or_else(|| format!("feature_{j}"), |s| s.to_string())
}

/// Feature indices shifted for each attack class.
pub fn signatures(cfg: &SynthConfig) -> BTreeMap<String, Vec<usize>> {
    cfg.class_counts
        .keys()
        .filter(|c| **c != cfg.normal_class)
        .enumerate()
        .map(|(c, name)| {
            let mut rng = substream(cfg.seed, 2000 + c as u64);
            let size = cfg.signature_size.min(cfg.n_informative);
            let mut idx = index::sample(&mut rng, cfg.n_informative, size).into_vec();
            idx.sort_unstable();
            (name.clone(), idx)
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<FeatureTable> {
    if cfg.n_informative == 0 {
        return Err(Error::InvalidParameter("need at least one feature".into()));
    }
    if !cfg.class_counts.contains_key(&cfg.normal_class) {
        return Err(Error::InvalidParameter(format!(
            "normal class {:?} has no count",
            cfg.normal_class
        )));
    }
    let p = cfg.n_informative;
    let mut rng = substream(cfg.seed, 1000);
    // raw units spanning several orders of magnitude
    let scale: Vec<f64> = (0..p)
        .map(|_| 10f64.powf(rng.random_range(0.0..4.0)))
        .collect();
    let sigs = signatures(cfg);

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, (class, &n)) in cfg.class_counts.iter().enumerate() {
        let mut rng = substream(cfg.seed, c as u64);
        let mut shift = vec![0.0; p];
        if let Some(sig) = sigs.get(class) {
            for &j in sig {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                shift[j] = sign * cfg.shift;
            }
        }
        for _ in 0..n {
            let row: Vec<f64> = (0..p)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale[j] * (cfg.log_sigma * (z + shift[j])).exp()
                })
                .collect();
            rows.push(row);
            labels.push(ClassLabel::raw(class.clone()));
        }
    }

    let mut names: Vec<String> = (0..p).map(feature_name).collect();
    for i in 0..cfg.constant_columns {
        names.push(format!("const_{i}"));
        for r in &mut rows {
            r.push(1.0);
        }
    }
    if cfg.missing_column {
        names.push("missing".into());
        for r in &mut rows {
            r.push(f64::NAN);
        }
    }
    for i in 0..cfg.duplicate_rows.min(rows.len()) {
        rows.push(rows[i].clone());
        labels.push(labels[i].clone());
    }
    FeatureTable::from_rows(names, &rows, "Label", labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_counts() {
        let cfg = SynthConfig {
            constant_columns: 2,
            duplicate_rows: 5,
            missing_column: true,
            ..Default::default()
        };
        let t = generate(&cfg).unwrap();
        assert_eq!(t.n_rows(), 4005);
        assert_eq!(t.n_features(), 23);
        // classes are emitted in name order, so the copies are Buffer_Overflow rows
        assert_eq!(t.class_counts()["Buffer_Overflow"], 400 + 5);
        assert_eq!(t.column("SrcJitter").unwrap().len(), 4005);
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn signatures_shift_class_means() {
        let cfg = SynthConfig::default();
        let t = generate(&cfg).unwrap();
        let sigs = signatures(&cfg);
        let mean_of = |j: usize, class: &str| {
            let col = &t.columns()[j];
            let v: Vec<f64> = t
                .labels()
                .iter()
                .zip(col)
                .filter(|(l, _)| l.raw == class)
                .map(|(_, v)| v.ln())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        for (class, sig) in &sigs {
            for j in 0..cfg.n_informative {
                let col = &t.columns()[j];
                let normal = mean_of(j, "Normal");
                let sd = {
                    let v: Vec<f64> = t
                        .labels()
                        .iter()
                        .zip(col)
                        .filter(|(l, _)| l.raw == "Normal")
                        .map(|(_, v)| v.ln())
                        .collect();
                    (v.iter().map(|x| (x - normal).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
                };
                let d = (mean_of(j, class) - normal).abs() / sd;
                if sig.contains(&j) {
                    assert!(d > 3.0, "{class} feature {j}: {d}");
                } else {
                    assert!(d < 0.5, "{class} feature {j}: {d}");
                }
            }
        }
    }
}
