//! Agreement between Shapley attributions, surrogate weights and
//! counterfactual changes for a single instance.
//!
//! Rankings use magnitudes with ties broken by feature name, so no score
//! depends on the order features are listed in. Surrogate weights are
//! re-oriented to class 1 before signs are compared with Shapley values.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dice::CounterfactualSet;
use crate::error::{Error, Result};
use crate::lime::{SurrogateExplanation, SurrogateWeight};
use crate::shap::Attribution;
use crate::SCHEMA_VERSION;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    pub k: usize,
    pub spearman_min: f64,
    pub jaccard_min: f64,
    pub cf_alignment_min: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            k: 10,
            spearman_min: 0.5,
            jaccard_min: 0.4,
            cf_alignment_min: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Partial,
    Inconsistent,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Partial => "partial",
            Verdict::Inconsistent => "inconsistent",
        }
    }

    /// Consistent if every available score meets its threshold, partial if
    /// at least one does. Missing scores are ignored.
    pub fn from_scores(
        spearman: Option<f64>,
        jaccard: Option<f64>,
        cf_alignment: Option<f64>,
        cfg: &ConsensusConfig,
    ) -> Option<Verdict> {
        let checks: Vec<bool> = [
            spearman.map(|s| s >= cfg.spearman_min),
            jaccard.map(|j| j >= cfg.jaccard_min),
            cf_alignment.map(|a| a >= cfg.cf_alignment_min),
        ]
        .into_iter()
        .flatten()
        .collect();
        if checks.is_empty() {
            None
        } else if checks.iter().all(|&c| c) {
            Some(Verdict::Consistent)
        } else if checks.iter().any(|&c| c) {
            Some(Verdict::Partial)
        } else {
            Some(Verdict::Inconsistent)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankAgreement {
    pub spearman: f64,
    pub jaccard: f64,
    /// `None` when the two top-K sets do not intersect.
    pub sign_agreement: Option<f64>,
    pub shared_features: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfAlignment {
    pub value: f64,
    /// No feature changed; the value is 1 by convention.
    pub zero_change: bool,
    pub changed: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub schema_version: u32,
    pub instance_id: String,
    pub k: usize,
    pub spearman_shap_lime: Option<f64>,
    pub topk_jaccard: Option<f64>,
    pub sign_agreement: Option<f64>,
    pub cf_alignment: Option<f64>,
    #[serde(default)]
    pub cf_zero_change: bool,
    pub shared_features: usize,
    pub verdict: Verdict,
    pub thresholds: ConsensusConfig,
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks. Identical rankings give 1; fewer
/// than two values or a constant ranking otherwise give 0.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    if ra == rb {
        return 1.0;
    }
    let n = ra.len() as f64;
    if ra.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Top `k` names by |score|, ties by name.
pub fn top_k(scores: &BTreeMap<String, f64>, k: usize) -> BTreeSet<String> {
    let mut v: Vec<(&String, f64)> = scores.iter().map(|(n, s)| (n, s.abs())).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().take(k).map(|(n, _)| n.clone()).collect()
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn shap_scores(attr: &Attribution) -> BTreeMap<String, f64> {
    attr.phi
        .iter()
        .map(|f| (f.feature.clone(), f.phi))
        .collect()
}

/// Surrogate weights oriented towards class 1.
fn lime_scores(surr: &SurrogateExplanation) -> BTreeMap<String, f64> {
    let sign = if surr.predicted_class == 1 { 1.0 } else { -1.0 };
    surr.weights
        .iter()
        .map(|w| (w.feature.clone(), sign * w.weight))
        .collect()
}

/// Scores-level agreement between two signed importance maps.
pub fn score_agreement(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
    k: usize,
) -> RankAgreement {
    let shared: Vec<&String> = a.keys().filter(|n| b.contains_key(*n)).collect();
    let ma: Vec<f64> = shared.iter().map(|n| a[*n].abs()).collect();
    let mb: Vec<f64> = shared.iter().map(|n| b[*n].abs()).collect();
    let (ta, tb) = (top_k(a, k), top_k(b, k));
    let both: Vec<&String> = ta.intersection(&tb).collect();
    let sign_agreement = (!both.is_empty()).then(|| {
        let agree = both.iter().filter(|n| sign(a[**n]) == sign(b[**n])).count();
        agree as f64 / both.len() as f64
    });
    RankAgreement {
        spearman: spearman(&ma, &mb),
        jaccard: jaccard(&ta, &tb),
        sign_agreement,
        shared_features: shared.len(),
    }
}

fn same_instance(a: &str, b: &str) -> Result<()> {
    if a != b {
        return Err(Error::InstanceMismatch(a.to_string(), b.to_string()));
    }
    Ok(())
}

pub fn rank_agreement(
    attr: &Attribution,
    surr: &SurrogateExplanation,
    k: usize,
) -> Result<RankAgreement> {
    same_instance(&attr.instance_id, &surr.instance_id)?;
    Ok(score_agreement(&shap_scores(attr), &lime_scores(surr), k))
}

/// Fraction of counterfactual-changed features found in the union of the
/// available top-K sets.
pub fn cf_feature_alignment(
    set: &CounterfactualSet,
    attr: Option<&Attribution>,
    surr: Option<&SurrogateExplanation>,
    k: usize,
) -> Result<CfAlignment> {
    let mut important = BTreeSet::new();
    if let Some(a) = attr {
        same_instance(&set.instance_id, &a.instance_id)?;
        important.extend(top_k(&shap_scores(a), k));
    }
    if let Some(s) = surr {
        same_instance(&set.instance_id, &s.instance_id)?;
        important.extend(top_k(&lime_scores(s), k));
    }
    let changed = set.changed_features();
    if changed.is_empty() {
        return Ok(CfAlignment {
            value: 1.0,
            zero_change: true,
            changed,
        });
    }
    let hit = changed.iter().filter(|c| important.contains(*c)).count();
    Ok(CfAlignment {
        value: hit as f64 / changed.len() as f64,
        zero_change: false,
        changed,
    })
}

/// Combines whichever explanations are available; at least two are needed.
pub fn build_consensus(
    attr: Option<&Attribution>,
    surr: Option<&SurrogateExplanation>,
    cfs: Option<&CounterfactualSet>,
    cfg: &ConsensusConfig,
) -> Result<ConsensusReport> {
    let ids: Vec<&str> = [
        attr.map(|a| a.instance_id.as_str()),
        surr.map(|s| s.instance_id.as_str()),
        cfs.map(|c| c.instance_id.as_str()),
    ]
    .into_iter()
    .flatten()
    .collect();
    if ids.len() < 2 {
        return Err(Error::InvalidParameter(
            "consensus needs at least two explanations".into(),
        ));
    }
    for w in ids.windows(2) {
        same_instance(w[0], w[1])?;
    }
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("consensus k must be ≥ 1".into()));
    }

    let ranks = match (attr, surr) {
        (Some(a), Some(s)) => Some(rank_agreement(a, s, cfg.k)?),
        _ => None,
    };
    let align = match cfs {
        Some(c) => Some(cf_feature_alignment(c, attr, surr, cfg.k)?),
        None => None,
    };
    let spearman = ranks.as_ref().map(|r| r.spearman);
    let jaccard = ranks.as_ref().map(|r| r.jaccard);
    let cf_alignment = align.as_ref().map(|a| a.value);
    let verdict = Verdict::from_scores(spearman, jaccard, cf_alignment, cfg)
        .expect("two explanations yield at least one score");
    Ok(ConsensusReport {
        schema_version: SCHEMA_VERSION,
        instance_id: ids[0].to_string(),
        k: cfg.k,
        spearman_shap_lime: spearman,
        topk_jaccard: jaccard,
        sign_agreement: ranks.as_ref().and_then(|r| r.sign_agreement),
        cf_alignment,
        cf_zero_change: align.as_ref().is_some_and(|a| a.zero_change),
        shared_features: ranks.as_ref().map_or(0, |r| r.shared_features),
        verdict,
        thresholds: cfg.clone(),
    })
}

/// An attribution recast as a surrogate whose weights are the φ values.
pub fn surrogate_from_attribution(attr: &Attribution) -> SurrogateExplanation {
    SurrogateExplanation {
        schema_version: SCHEMA_VERSION,
        instance_id: attr.instance_id.clone(),
        predicted_class: 1,
        class_probabilities: [1.0 - attr.prediction, attr.prediction],
        intercept: attr.base_value,
        weights: attr
            .phi
            .iter()
            .map(|f| SurrogateWeight {
                feature: f.feature.clone(),
                weight: f.phi,
                instance_value: f.value,
            })
            .collect(),
        kernel_width: 0.0,
        n_perturbations: 0,
        local_fidelity: 1.0,
        surrogate_prediction: attr.prediction,
        ridge: 0.0,
        seed: 0,
    }
}
