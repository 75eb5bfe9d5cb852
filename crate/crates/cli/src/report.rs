//! Plain-text summary of a bundle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use xids_core::{Attribution, ConsensusReport, CounterfactualSet, SurrogateExplanation};

use crate::error::{CliError, CliResult};
use crate::io::{read_json, write_atomic};
use crate::pipeline::{Bundle, DatasetMeta, MetricsFile};

const TOP: usize = 5;

/// Instance folders as `(index, path)`, sorted by index.
fn instance_dirs(dir: &Path) -> CliResult<Vec<(usize, PathBuf)>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Bundle {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(i) = name.strip_prefix("instance_").and_then(|s| s.parse().ok()) {
            out.push((i, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn optional<T: serde::de::DeserializeOwned>(path: PathBuf) -> CliResult<Option<T>> {
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

/// Renders the bundle at `bundle.root`; deterministic for a given bundle.
pub fn render(bundle: &Bundle) -> CliResult<String> {
    let meta: DatasetMeta = read_json(&bundle.dataset_meta())?;
    let metrics: MetricsFile = read_json(&bundle.metrics())?;
    let mut s = String::new();

    let _ = writeln!(s, "== dataset");
    let _ = writeln!(
        s,
        "rows {} ({} normal, {} attack), features {}",
        meta.binary_counts[0] + meta.binary_counts[1],
        meta.binary_counts[0],
        meta.binary_counts[1],
        meta.feature_names.len()
    );
    for (class, n) in &meta.class_counts_after_resample {
        let before = meta
            .class_counts_before_resample
            .get(class)
            .copied()
            .unwrap_or(0);
        let _ = writeln!(s, "  {class:<20} {before:>8} -> {n:>6}");
    }

    let _ = writeln!(
        s,
        "\n== models (train {}, test {})",
        metrics.n_train, metrics.n_test
    );
    let _ = writeln!(
        s,
        "{:<22} {:>9} {:>9} {:>9} {:>9}",
        "model", "accuracy", "precision", "recall", "f1"
    );
    for m in &metrics.models {
        let r = &m.report;
        let mark = if m.kind == metrics.primary { "*" } else { " " };
        let _ = writeln!(
            s,
            "{mark}{:<21} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            m.label, r.accuracy, r.precision_macro, r.recall_macro, r.f1_macro
        );
    }

    let _ = writeln!(s, "\n== explanations");
    let dirs = instance_dirs(&bundle.explanations())?;
    if dirs.is_empty() {
        let _ = writeln!(s, "no explanations");
    }
    for (i, dir) in dirs {
        let shap: Option<Attribution> = optional(dir.join("shap.json"))?;
        let lime: Option<SurrogateExplanation> = optional(dir.join("lime.json"))?;
        let dice: Option<CounterfactualSet> = optional(dir.join("dice.json"))?;
        let consensus: Option<ConsensusReport> = optional(dir.join("consensus.json"))?;
        let _ = writeln!(s, "-- instance {i}");
        if let Some(a) = &shap {
            let _ = writeln!(
                s,
                "  shap: base {:.4}, prediction {:.4}",
                a.base_value, a.prediction
            );
            let mut phi: Vec<_> = a.phi.iter().collect();
            phi.sort_by(|x, y| {
                y.phi
                    .abs()
                    .total_cmp(&x.phi.abs())
                    .then_with(|| x.feature.cmp(&y.feature))
            });
            for f in phi.iter().take(TOP) {
                let _ = writeln!(s, "    {:<24} {:+.4}", f.feature, f.phi);
            }
        }
        if let Some(l) = &lime {
            let _ = writeln!(
                s,
                "  lime: class {} p {:.4}, fidelity {:.4}",
                l.predicted_class,
                l.model_prediction(),
                l.local_fidelity
            );
            for w in l.weights.iter().take(TOP) {
                let _ = writeln!(s, "    {:<24} {:+.4}", w.feature, w.weight);
            }
        }
        if let Some(d) = &dice {
            let _ = writeln!(
                s,
                "  dice: {} counterfactuals to class {}, {} valid, diversity {:.4}",
                d.counterfactuals.len(),
                d.target,
                d.n_valid(),
                d.diversity
            );
            let changed = d.changed_features();
            let shown: Vec<&str> = changed.iter().take(TOP).map(String::as_str).collect();
            let more = changed.len().saturating_sub(TOP);
            let _ = writeln!(
                s,
                "    changed: {}{}",
                if shown.is_empty() {
                    "none".to_string()
                } else {
                    shown.join(", ")
                },
                if more > 0 {
                    format!(" (+{more} more)")
                } else {
                    String::new()
                }
            );
        }
        if let Some(c) = &consensus {
            let _ = writeln!(
                s,
                "  consensus: spearman {}, jaccard {}, sign {}, cf_alignment {}",
                fmt_opt(c.spearman_shap_lime),
                fmt_opt(c.topk_jaccard),
                fmt_opt(c.sign_agreement),
                fmt_opt(c.cf_alignment)
            );
            let _ = writeln!(s, "  verdict: {}", c.verdict.as_str());
        }
    }
    Ok(s)
}

/// Renders and writes `summary.txt`.
pub fn cmd_report(bundle: &Bundle) -> CliResult<String> {
    let text = render(bundle)?;
    write_atomic(&bundle.summary(), text.as_bytes())?;
    Ok(text)
}
