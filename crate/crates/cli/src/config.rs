//! Pipeline configuration: one JSON document, paths relative to its folder.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xids_core::dice::DiceParams;
use xids_core::models::{DenseNetParams, ForestParams, LogisticParams};
use xids_core::synth::SynthConfig;
use xids_core::tabular::CleanConfig;
use xids_core::{ConsensusConfig, LimeConfig, ModelKind};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Labelled CSV. Exactly one of `input` and `synthetic` must be set.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default = "default_normal")]
    pub normal_class: String,
    #[serde(default)]
    pub clean: CleanConfig,
    #[serde(default)]
    pub resample: Option<ResampleConfig>,
    #[serde(default = "yes")]
    pub scale: bool,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub split: SplitConfig,
    /// Master seed; every stage seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_label() -> String {
    "Label".into()
}

fn default_normal() -> String {
    "Normal".into()
}

fn default_out() -> PathBuf {
    "out".into()
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleConfig {
    /// Rows per raw class after balancing.
    pub targets: BTreeMap<String, usize>,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// With SMOTE off, every target must already be available.
    #[serde(default = "yes")]
    pub smote: bool,
}

fn default_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Also train the other three kinds for the metrics table.
    pub compare: bool,
    pub forest: ForestParams,
    pub logistic: LogisticParams,
    pub knn_k: usize,
    pub dense: DenseNetParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::RandomForest,
            compare: true,
            forest: ForestParams::default(),
            logistic: LogisticParams::default(),
            knn_k: 5,
            dense: DenseNetParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.25,
            stratify: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shap,
    Lime,
    Dice,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Shap, Method::Lime, Method::Dice];

    pub fn name(self) -> &'static str {
        match self {
            Method::Shap => "shap",
            Method::Lime => "lime",
            Method::Dice => "dice",
        }
    }

    pub fn parse_list(s: &str) -> CliResult<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m = match part.to_ascii_lowercase().as_str() {
                "shap" => Method::Shap,
                "lime" => Method::Lime,
                "dice" => Method::Dice,
                "all" => {
                    out.extend(Method::ALL);
                    continue;
                }
                other => return Err(CliError::Config(format!("unknown method {other:?}"))),
            };
            out.push(m);
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(CliError::Config("no explanation methods given".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    /// Exact when the feature count is within the enumeration cap.
    Auto,
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapSettings {
    pub mode: ShapMode,
    pub n_permutations: usize,
    /// Rows drawn from the training split, stratified by class.
    pub background_size: usize,
}

impl Default for ShapSettings {
    fn default() -> Self {
        Self {
            mode: ShapMode::Auto,
            n_permutations: 500,
            background_size: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Row indices into the test split.
    pub instances: Vec<usize>,
    pub methods: Vec<Method>,
    pub shap: ShapSettings,
    pub lime: LimeConfig,
    pub dice: DiceParams,
    /// Features counterfactuals may not change.
    pub immutable: Vec<String>,
    pub consensus: ConsensusConfig,
    pub svg: bool,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            instances: vec![0],
            methods: Method::ALL.to_vec(),
            shap: ShapSettings::default(),
            lime: LimeConfig::default(),
            dice: DiceParams::default(),
            immutable: Vec::new(),
            consensus: ConsensusConfig::default(),
            svg: false,
        }
    }
}

/// Seeds derived from the master seed, one per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub resample: u64,
    pub split: u64,
    pub model: u64,
    pub background: u64,
    pub shap: u64,
    pub lime: u64,
    pub dice: u64,
}

impl StageSeeds {
    pub fn derive(master: u64) -> Self {
        let s = |stage: u64| master ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Self {
            resample: s(1),
            split: s(2),
            model: s(3),
            background: s(4),
            shap: s(5),
            lime: s(6),
            dice: s(7),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads the file and makes relative paths relative to its folder.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(input) = &cfg.input {
            if input.is_relative() {
                cfg.input = Some(base.join(input));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> CliResult<()> {
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "set only one of `input` and `synthetic`".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "set one of `input` and `synthetic`".into(),
                ))
            }
            (Some(p), None) if !p.is_file() => {
                return Err(CliError::Config(format!(
                    "input {} does not exist",
                    p.display()
                )))
            }
            _ => {}
        }
        if let Some(r) = &self.resample {
            if r.targets.is_empty() {
                return Err(CliError::Config("resample.targets is empty".into()));
            }
            if !r.targets.contains_key(&self.normal_class) {
                return Err(CliError::Config(format!(
                    "resample.targets has no entry for normal class {:?}",
                    self.normal_class
                )));
            }
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Config(format!(
                "split.test_fraction {f} not in (0, 1)"
            )));
        }
        if self.explain.methods.is_empty() {
            return Err(CliError::Config("explain.methods is empty".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }
}
