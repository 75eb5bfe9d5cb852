//! The five subcommands as library functions over a [`PipelineConfig`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use xids_core::consensus::build_consensus;
use xids_core::dice::{cf_report, generate_counterfactuals, CounterfactualQuery};
use xids_core::lime::explain_lime;
use xids_core::models::{
    evaluate, train_dense_net, train_knn, train_logistic_regression, train_random_forest,
    train_test_split, DenseNetParams, ForestParams,
};
use xids_core::plot::force_plot_svg;
use xids_core::resample::{apply_plan, class_counts, stratified_sample};
use xids_core::shap::{shap_exact, shap_sampled, SampledConfig, DEFAULT_EXACT_CAP};
use xids_core::tabular::{
    apply_scaler, binarize_labels, clean_with, drop_zero_variance, fit_scaler, load_csv, read_csv,
    LabelMap,
};
use xids_core::{
    Attribution, BackgroundSet, CounterfactualSet, EvalReport, FeatureTable, LimeConfig, ModelKind,
    PreprocessReport, ResamplePlan, ScalerParams, SurrogateExplanation, SyntheticProvenance,
    TrainStats, TrainedModel, SCHEMA_VERSION,
};

use crate::config::{Method, PipelineConfig, ShapMode, StageSeeds};
use crate::error::{CliError, CliResult};
use crate::io::{read_json, write_atomic, write_json};

/// File layout of an output bundle.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub root: PathBuf,
}

impl Bundle {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }
    pub fn dataset_meta(&self) -> PathBuf {
        self.root.join("dataset.meta.json")
    }
    pub fn preprocess_report(&self) -> PathBuf {
        self.root.join("preprocess_report.json")
    }
    pub fn model(&self) -> PathBuf {
        self.root.join("model.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn explanations(&self) -> PathBuf {
        self.root.join("explanations")
    }
    pub fn instance_dir(&self, index: usize) -> PathBuf {
        self.explanations().join(format!("instance_{index}"))
    }
    pub fn run_metadata(&self) -> PathBuf {
        self.root.join("run_metadata.json")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
}

/// Sidecar describing how `dataset.csv` was produced and how to read it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub label_column: String,
    pub feature_names: Vec<String>,
    /// Present when the features were min-max scaled.
    pub scaler: Option<ScalerParams>,
    pub label_map: LabelMap,
    pub class_counts_before_resample: BTreeMap<String, usize>,
    pub class_counts_after_resample: BTreeMap<String, usize>,
    /// `[normal, attack]` row counts.
    pub binary_counts: [usize; 2],
    pub synthetic_rows: BTreeMap<String, usize>,
}

pub struct Prepared {
    pub table: FeatureTable,
    pub report: PreprocessReport,
    pub meta: DatasetMeta,
    pub provenance: BTreeMap<String, SyntheticProvenance>,
}

pub fn load_source(cfg: &PipelineConfig) -> CliResult<FeatureTable> {
    match (&cfg.input, &cfg.synthetic) {
        (Some(path), _) => Ok(load_csv(path, &cfg.label_column)?),
        (None, Some(synth)) => {
            let t = xids_core::synth::generate(synth)?;
            // the generator always names its label column "Label"
            Ok(t.with_label_name(&cfg.label_column))
        }
        (None, None) => Err(CliError::Config(
            "set one of `input` and `synthetic`".into(),
        )),
    }
}

/// clean → drop constant columns → scale → resample → binarize.
pub fn prepare(
    raw: &FeatureTable,
    cfg: &PipelineConfig,
    seeds: &StageSeeds,
) -> CliResult<Prepared> {
    let (table, mut report) = clean_with(raw, &cfg.clean)?;
    let (table, dropped) = drop_zero_variance(&table)?;
    report.record_zero_variance(dropped, &table);

    let (table, scaler) = if cfg.scale {
        let params = fit_scaler(&table)?;
        (apply_scaler(&table, &params)?, Some(params))
    } else {
        (table, None)
    };

    let before = class_counts(&table);
    let (table, provenance) = match &cfg.resample {
        None => (table, BTreeMap::new()),
        Some(r) => {
            let mut plan = ResamplePlan::new(r.targets.clone(), seeds.resample);
            plan.k_neighbors = r.k_neighbors;
            if r.smote {
                apply_plan(&table, &plan)?
            } else {
                plan.validate(&table)?;
                (stratified_sample(&table, &plan)?, BTreeMap::new())
            }
        }
    };
    let after = class_counts(&table);

    let label_map = LabelMap::infer(&table, &cfg.normal_class);
    let table = binarize_labels(&table, &label_map)?;
    let y = table.binary_labels()?;
    let ones = y.iter().filter(|&&b| b == 1).count();
    let meta = DatasetMeta {
        schema_version: SCHEMA_VERSION,
        label_column: cfg.label_column.clone(),
        feature_names: table.column_names().to_vec(),
        scaler,
        label_map,
        class_counts_before_resample: before,
        class_counts_after_resample: after,
        binary_counts: [y.len() - ones, ones],
        synthetic_rows: provenance
            .iter()
            .map(|(c, p)| (c.clone(), p.rows.len()))
            .collect(),
    };
    Ok(Prepared {
        table,
        report,
        meta,
        provenance,
    })
}

pub fn cmd_preprocess(cfg: &PipelineConfig) -> CliResult<Prepared> {
    cfg.validate()?;
    let raw = load_source(cfg)?;
    let prepared = prepare(&raw, cfg, &cfg.seeds())?;
    let bundle = Bundle::new(&cfg.output_dir);
    let mut csv = Vec::new();
    prepared.table.write_csv(&mut csv)?;
    write_atomic(&bundle.dataset(), &csv)?;
    write_json(&bundle.dataset_meta(), &prepared.meta)?;
    write_json(&bundle.preprocess_report(), &prepared.report)?;
    Ok(prepared)
}

/// Reloads the preprocessed dataset with binary labels.
pub fn load_dataset(bundle: &Bundle) -> CliResult<(FeatureTable, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&bundle.dataset_meta())?;
    let path = bundle.dataset();
    let file = std::fs::File::open(&path).map_err(|e| CliError::Bundle {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let table = read_csv(file, &meta.label_column)?;
    if table.column_names() != meta.feature_names.as_slice() {
        return Err(CliError::Bundle {
            path,
            message: "columns differ from dataset.meta.json".into(),
        });
    }
    let table = binarize_labels(&table, &meta.label_map)?;
    Ok((table, meta))
}

pub fn split(
    table: &FeatureTable,
    cfg: &PipelineConfig,
) -> CliResult<(FeatureTable, FeatureTable)> {
    Ok(train_test_split(
        table,
        cfg.split.test_fraction,
        cfg.split.stratify,
        cfg.seeds().split,
    )?)
}

pub fn train_kind(
    kind: ModelKind,
    train: &FeatureTable,
    cfg: &PipelineConfig,
) -> CliResult<TrainedModel> {
    let seed = cfg.seeds().model;
    let m = &cfg.model;
    Ok(match kind {
        ModelKind::RandomForest => train_random_forest(
            train,
            &ForestParams {
                seed,
                ..m.forest.clone()
            },
        )?,
        ModelKind::LogisticRegression => train_logistic_regression(train, &m.logistic)?,
        ModelKind::Knn => train_knn(train, m.knn_k)?,
        ModelKind::DenseNet => train_dense_net(
            train,
            &DenseNetParams {
                seed,
                ..m.dense.clone()
            },
        )?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub kind: ModelKind,
    pub label: String,
    pub report: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: u32,
    pub primary: ModelKind,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelMetrics>,
}

impl MetricsFile {
    pub fn get(&self, kind: ModelKind) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

pub fn cmd_train(cfg: &PipelineConfig, canonical: bool) -> CliResult<MetricsFile> {
    let bundle = Bundle::new(&cfg.output_dir);
    let (table, _) = load_dataset(&bundle)?;
    let (train, test) = split(&table, cfg)?;
    let kinds: Vec<ModelKind> = if cfg.model.compare {
        ModelKind::ALL.to_vec()
    } else {
        vec![cfg.model.kind]
    };
    let mut models = Vec::new();
    for kind in kinds {
        let start = Instant::now();
        let model = train_kind(kind, &train, cfg)?;
        let secs = start.elapsed().as_secs_f64();
        let report = evaluate(&model, &test)?;
        if kind == cfg.model.kind {
            write_atomic(&bundle.model(), model.to_json()?.as_bytes())?;
        }
        models.push(ModelMetrics {
            kind,
            label: kind.label().to_string(),
            report,
            train_seconds: (!canonical).then_some(secs),
        });
    }
    let metrics = MetricsFile {
        schema_version: SCHEMA_VERSION,
        primary: cfg.model.kind,
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        models,
    };
    write_json(&bundle.metrics(), &metrics)?;
    Ok(metrics)
}

pub fn load_model(bundle: &Bundle) -> CliResult<TrainedModel> {
    let path = bundle.model();
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Bundle {
        path: path.clone(),
        message: e.to_string(),
    })?;
    TrainedModel::from_json(&text).map_err(|e| CliError::Bundle {
        path,
        message: e.to_string(),
    })
}

/// What was produced for one instance.
#[derive(Clone, Debug, Default)]
pub struct InstanceOutput {
    pub index: usize,
    pub shap: Option<Attribution>,
    pub lime: Option<SurrogateExplanation>,
    pub dice: Option<CounterfactualSet>,
    pub consensus: Option<xids_core::ConsensusReport>,
    pub svg: Option<PathBuf>,
}

pub fn cmd_explain(
    cfg: &PipelineConfig,
    instances: &[usize],
    methods: &[Method],
    svg: bool,
) -> CliResult<Vec<InstanceOutput>> {
    if methods.is_empty() {
        return Err(CliError::Config("no explanation methods given".into()));
    }
    let bundle = Bundle::new(&cfg.output_dir);
    let (table, meta) = load_dataset(&bundle)?;
    let model = load_model(&bundle)?;
    model.check_features(table.column_names())?;
    let (train, test) = split(&table, cfg)?;
    for &i in instances {
        if i >= test.n_rows() {
            return Err(xids_core::Error::IndexOutOfRange {
                index: i,
                len: test.n_rows(),
            }
            .into());
        }
    }
    let seeds = cfg.seeds();
    let ex = &cfg.explain;
    let background = if methods.contains(&Method::Shap) {
        Some(BackgroundSet::subsample(
            &train,
            ex.shap.background_size,
            seeds.background,
        )?)
    } else {
        None
    };
    let stats = if methods.contains(&Method::Lime) {
        Some(TrainStats::from_table(&train)?)
    } else {
        None
    };

    let mut outputs = Vec::new();
    for &i in instances {
        let instance = test.instance(i, format!("test_{i}"))?;
        let dir = bundle.instance_dir(i);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|source| CliError::Write {
                path: dir.clone(),
                source,
            })?;
        }
        let mut out = InstanceOutput {
            index: i,
            ..Default::default()
        };

        if let Some(bg) = &background {
            let exact = match ex.shap.mode {
                ShapMode::Exact => true,
                ShapMode::Sampled => false,
                ShapMode::Auto => instance.len() <= DEFAULT_EXACT_CAP,
            };
            let attr = if exact {
                shap_exact(&model, &instance, bg)?
            } else {
                shap_sampled(
                    &model,
                    &instance,
                    bg,
                    &SampledConfig {
                        n_permutations: ex.shap.n_permutations,
                        seed: seeds.shap ^ i as u64,
                        enforce_efficiency: true,
                    },
                )?
            };
            write_json(&dir.join("shap.json"), &attr)?;
            if svg {
                let path = dir.join("force_plot.svg");
                write_atomic(&path, force_plot_svg(&attr).as_bytes())?;
                out.svg = Some(path);
            }
            out.shap = Some(attr);
        }

        if let Some(stats) = &stats {
            let lime_cfg = LimeConfig {
                seed: seeds.lime ^ i as u64,
                ..ex.lime.clone()
            };
            let surr = explain_lime(&model, &instance, stats, &lime_cfg, meta.scaler.as_ref())?;
            write_json(&dir.join("lime.json"), &surr)?;
            out.lime = Some(surr);
        }

        if methods.contains(&Method::Dice) {
            let mut query = CounterfactualQuery::new(instance.clone(), ex.dice.clone());
            query.params.seed = seeds.dice ^ i as u64;
            query.immutable = ex.immutable.clone();
            let set = generate_counterfactuals(&model, &query)?;
            write_json(&dir.join("dice.json"), &set)?;
            let diff = cf_report(&set, meta.scaler.as_ref())?;
            write_atomic(&dir.join("dice_diff.txt"), diff.to_text().as_bytes())?;
            out.dice = Some(set);
        }

        if methods.len() >= 2 {
            let report = build_consensus(
                out.shap.as_ref(),
                out.lime.as_ref(),
                out.dice.as_ref(),
                &ex.consensus,
            )?;
            write_json(&dir.join("consensus.json"), &report)?;
            out.consensus = Some(report);
        }
        outputs.push(out);
    }
    Ok(outputs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub stage_seeds: StageSeeds,
    /// The configuration with paths reduced to file names.
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_seconds: Option<BTreeMap<String, f64>>,
}

fn portable(cfg: &PipelineConfig) -> PipelineConfig {
    let mut c = cfg.clone();
    c.input = c
        .input
        .as_ref()
        .and_then(|p| p.file_name())
        .map(PathBuf::from);
    c.output_dir = PathBuf::from(".");
    c
}

pub fn cmd_run_all(cfg: &PipelineConfig, canonical: bool) -> CliResult<String> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut timed = |name: &str, start: Instant| {
        timings.insert(name.to_string(), start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    cmd_preprocess(cfg)?;
    timed("preprocess", t);
    let t = Instant::now();
    cmd_train(cfg, canonical)?;
    timed("train", t);
    let t = Instant::now();
    let explanations = Bundle::new(&cfg.output_dir).explanations();
    if explanations.exists() {
        std::fs::remove_dir_all(&explanations).map_err(|source| CliError::Write {
            path: explanations.clone(),
            source,
        })?;
    }
    cmd_explain(
        cfg,
        &cfg.explain.instances,
        &cfg.explain.methods,
        cfg.explain.svg,
    )?;
    timed("explain", t);

    let meta = RunMetadata {
        schema_version: SCHEMA_VERSION,
        tool: "xids".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        stage_seeds: cfg.seeds(),
        config: portable(cfg),
        timings_seconds: (!canonical).then_some(timings),
    };
    let bundle = Bundle::new(&cfg.output_dir);
    write_json(&bundle.run_metadata(), &meta)?;
    crate::report::cmd_report(&bundle)
}
