mod common;

use std::path::Path;
use std::process::Command;

use rand::Rng as _;
use regex::Regex;
use xids_cli::pipeline::{
    cmd_explain, cmd_preprocess, cmd_run_all, cmd_train, load_dataset, load_model, split,
    train_kind, MetricsFile,
};
use xids_cli::report::render;
use xids_cli::{Bundle, Method};
use xids_core::rng::seeded;
use xids_core::{Attribution, Classifier, ConsensusReport, ModelKind, TrainedModel};

use common::{read_tree, small_config, write_config, SMALL_CONFIG};

fn xids(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_xids"))
        .args(args)
        .output()
        .expect("xids runs")
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn report_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = cmd_run_all(&cfg, true).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/summary.txt");
    if std::env::var_os("XIDS_BLESS").is_some() {
        std::fs::write(&golden, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).unwrap();
    assert_eq!(
        text, expected,
        "rerun with XIDS_BLESS=1 to accept a deliberate change"
    );
    let on_disk = std::fs::read_to_string(Bundle::new(&cfg.output_dir).summary()).unwrap();
    assert_eq!(on_disk, text);
}

#[test]
fn run_all_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        cmd_run_all(&small_config(dir.path()), true).unwrap();
    }
    let ta = read_tree(&a.path().join("bundle"));
    let tb = read_tree(&b.path().join("bundle"));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (path, bytes) in &ta {
        assert!(tb[path] == *bytes, "{} differs", path.display());
    }
    assert!(ta.contains_key(Path::new("explanations/instance_1/consensus.json")));
}

#[test]
fn rerun_over_existing_bundle_overwrites_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_run_all(&cfg, true).unwrap();
    let first = read_tree(&cfg.output_dir);
    cmd_run_all(&cfg, true).unwrap();
    assert_eq!(first, read_tree(&cfg.output_dir));
}

#[test]
fn verdict_line_matches_consensus_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = cmd_run_all(&cfg, true).unwrap();
    let bundle = Bundle::new(&cfg.output_dir);
    let block = Regex::new(r"(?m)^-- instance (\d+)$").unwrap();
    let verdict = Regex::new(r"(?m)^  verdict: (\w+)$").unwrap();
    let starts: Vec<(usize, usize)> = block
        .captures_iter(&text)
        .map(|c| (c.get(0).unwrap().start(), c[1].parse().unwrap()))
        .collect();
    assert_eq!(starts.len(), 2);
    for (n, &(start, index)) in starts.iter().enumerate() {
        let end = starts.get(n + 1).map_or(text.len(), |s| s.0);
        let line = verdict.captures(&text[start..end]).expect("verdict line");
        let report: ConsensusReport = read(&bundle.instance_dir(index).join("consensus.json"));
        assert_eq!(&line[1], report.verdict.as_str());
    }
}

#[test]
fn svg_walk_ends_at_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_run_all(&cfg, true).unwrap();
    let idir = Bundle::new(&cfg.output_dir).instance_dir(0);
    let attr: Attribution = read(&idir.join("shap.json"));
    let svg = std::fs::read_to_string(idir.join("force_plot.svg")).unwrap();
    let rect = Regex::new(r#"data-phi="([^"]+)" data-start="([^"]+)" data-end="([^"]+)""#).unwrap();
    let mut at = attr.base_value;
    let mut n = 0;
    for c in rect.captures_iter(&svg) {
        let (phi, start, end): (f64, f64, f64) = (
            c[1].parse().unwrap(),
            c[2].parse().unwrap(),
            c[3].parse().unwrap(),
        );
        assert_eq!(start, at, "bar {n} does not start where the last ended");
        assert!((end - (start + phi)).abs() < 1e-15);
        at = end;
        n += 1;
    }
    assert_eq!(n, attr.phi.len());
    assert!(
        (at - attr.prediction).abs() < 1e-9,
        "walk ends at {at}, prediction {}",
        attr.prediction
    );
}

#[test]
fn metrics_have_four_model_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    let metrics: MetricsFile = read(&Bundle::new(&cfg.output_dir).metrics());
    let kinds: Vec<ModelKind> = metrics.models.iter().map(|m| m.kind).collect();
    assert_eq!(kinds.len(), 4);
    for kind in ModelKind::ALL {
        assert!(kinds.contains(&kind), "{kind:?} missing");
    }
    assert_eq!(metrics.primary, ModelKind::RandomForest);
    assert_eq!(metrics.n_train + metrics.n_test, 600);
}

#[test]
fn model_file_round_trips_on_probes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    let bundle = Bundle::new(&cfg.output_dir);
    let (table, _) = load_dataset(&bundle).unwrap();
    let (train, _) = split(&table, &cfg).unwrap();
    let fresh = train_kind(ModelKind::RandomForest, &train, &cfg).unwrap();
    let loaded = load_model(&bundle).unwrap();
    let again = TrainedModel::from_json(&loaded.to_json().unwrap()).unwrap();
    let mut rng = seeded(99);
    for _ in 0..100 {
        let x: Vec<f64> = (0..table.n_features())
            .map(|_| rng.random::<f64>())
            .collect();
        let p = fresh.predict_proba(&x);
        assert_eq!(loaded.predict_proba(&x), p);
        assert_eq!(again.predict_proba(&x), p);
    }
}

#[test]
fn shap_only_writes_no_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    let outs = cmd_explain(&cfg, &[3], &[Method::Shap], false).unwrap();
    assert!(outs[0].consensus.is_none());
    let idir = Bundle::new(&cfg.output_dir).instance_dir(3);
    assert!(idir.join("shap.json").exists());
    assert!(!idir.join("consensus.json").exists());
    assert!(!idir.join("force_plot.svg").exists());

    let config = dir.path().join("config.json");
    let out = xids(&[
        "explain",
        "--config",
        config.to_str().unwrap(),
        "--instance",
        "4",
        "--methods",
        "shap",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let idir = Bundle::new(&cfg.output_dir).instance_dir(4);
    assert!(idir.join("shap.json").exists());
    assert!(!idir.join("consensus.json").exists());
}

#[test]
fn all_methods_write_consensus_and_svg_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    cmd_explain(&cfg, &[5], &Method::ALL, true).unwrap();
    let idir = Bundle::new(&cfg.output_dir).instance_dir(5);
    for f in [
        "shap.json",
        "lime.json",
        "dice.json",
        "dice_diff.txt",
        "consensus.json",
        "force_plot.svg",
    ] {
        assert!(idir.join(f).exists(), "{f} missing");
    }
}

#[test]
fn empty_explanations_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    let bundle = Bundle::new(&cfg.output_dir);
    assert!(render(&bundle).unwrap().contains("no explanations"));
    std::fs::create_dir_all(bundle.explanations()).unwrap();
    assert!(render(&bundle).unwrap().contains("no explanations"));
}

#[test]
fn target_above_available_without_smote_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace(
        r#""Buffer_Overflow": 75 }"#,
        r#""Buffer_Overflow": 75 }, "smote": false"#,
    );
    let config = write_config(dir.path(), &text);
    let out = xids(&["preprocess", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["exit_code"], 2);
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains("Buffer_Overflow"), "{msg}");
    assert!(!dir.path().join("bundle/dataset.csv").exists());
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = xids(&["run-all", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let bad = write_config(dir.path(), r#"{"synthetic": {}, "bogus": 1}"#);
    let out = xids(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    // no bundle yet: explain has nothing to read
    let config = write_config(dir.path(), SMALL_CONFIG);
    let out = xids(&["explain", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let empty = dir.path().join("empty");
    let out = xids(&["report", "--out", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn instance_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cmd_preprocess(&cfg).unwrap();
    cmd_train(&cfg, true).unwrap();
    let err = cmd_explain(&cfg, &[150], &[Method::Lime], false).unwrap_err();
    assert!(err.to_string().contains("150"), "{err}");
    assert!(!Bundle::new(&cfg.output_dir).instance_dir(150).exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_CONFIG);
    let out_dir = dir.path().join("elsewhere");
    let out = xids(&[
        "preprocess",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("dataset.csv").exists());
    assert!(!dir.path().join("bundle").exists());

    let mut cfg = small_config(dir.path());
    cfg.output_dir = dir.path().join("seed7");
    cmd_preprocess(&cfg).unwrap();
    let a = std::fs::read(out_dir.join("dataset.csv")).unwrap();
    let b = std::fs::read(cfg.output_dir.join("dataset.csv")).unwrap();
    assert_ne!(a, b, "seed flag had no effect");
}
