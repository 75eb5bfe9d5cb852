//! Explainable intrusion detection for medical-IoT network and host telemetry.
//!
//! The crate covers the whole pipeline: tabular ingestion and cleaning,
//! SMOTE balancing, from-scratch classifiers, and three model-agnostic
//! explainers (Shapley attribution, local linear surrogates, diverse
//! counterfactuals) whose outputs are then cross-checked for agreement.
//!
//! Every explainer talks to models through the [`Classifier`] trait, so
//! anything producing a two-class probability vector can be explained.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod dice;
pub mod error;
pub mod lime;
pub mod models;
pub mod plot;
pub mod resample;
pub mod rng;
pub mod shap;
pub mod synth;
pub mod tabular;

pub use consensus::{ConsensusConfig, ConsensusReport, Verdict};
pub use dice::{CounterfactualQuery, CounterfactualSet};
pub use error::{Error, Result};
pub use lime::{LimeConfig, SurrogateExplanation, TrainStats};
pub use models::{Classifier, EvalReport, ModelKind, TrainedModel};
pub use resample::{ResamplePlan, SyntheticProvenance};
pub use shap::{Attribution, BackgroundSet};
pub use tabular::{ClassLabel, FeatureTable, Instance, PreprocessReport, ScalerParams};

/// Version tag written into every serialized document.
pub const SCHEMA_VERSION: u32 = 1;
