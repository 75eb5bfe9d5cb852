//! Small, fast pipeline configuration shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use xids_cli::PipelineConfig;

/// Config text with `output_dir` left relative, for writing next to a bundle.
pub const SMALL_CONFIG: &str = r#"{
  "synthetic": {
    "class_counts": { "Normal": 600, "DDoS": 150, "MitM": 60, "Ransomware": 40, "Buffer_Overflow": 20 },
    "constant_columns": 1,
    "duplicate_rows": 5,
    "seed": 3
  },
  "resample": {
    "targets": { "Normal": 300, "DDoS": 75, "MitM": 75, "Ransomware": 75, "Buffer_Overflow": 75 }
  },
  "model": {
    "forest": { "n_trees": 25 },
    "logistic": { "epochs": 300 },
    "dense": { "layers": [16, 8, 1], "epochs": 5 }
  },
  "seed": 7,
  "explain": {
    "instances": [0, 1],
    "shap": { "n_permutations": 200, "background_size": 30 },
    "lime": { "n_perturbations": 1000 },
    "dice": { "population": 60, "generations": 30 },
    "immutable": ["svmem_percent"],
    "svg": true
  },
  "output_dir": "bundle"
}"#;

/// Writes `config.json` into `dir` and returns its path; the bundle goes to
/// `dir/bundle`.
pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn small_config(dir: &Path) -> PipelineConfig {
    PipelineConfig::load(&write_config(dir, SMALL_CONFIG)).unwrap()
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
