use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),

    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("column length mismatch: {0}")]
    Shape(String),

    #[error("no usable features")]
    NoUsableFeatures,

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("column {0:?} has max == min; cannot scale")]
    DegenerateRange(String),

    #[error("unseen raw labels: {0:?}")]
    UnseenLabels(Vec<String>),

    #[error("labels are not binarized")]
    NotBinarized,

    #[error("SMOTE needs ≥2 minority samples (class {class:?} has {found})")]
    SmoteTooFewSamples { class: String, found: usize },

    #[error("class {class:?}: target {target} exceeds available {available}")]
    TargetExceedsAvailable {
        class: String,
        target: usize,
        available: usize,
    },

    #[error("resample plan: {0}")]
    InvalidPlan(String),

    #[error("empty table")]
    EmptyTable,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("loss increased at epoch {epoch} ({before} -> {after}); try a smaller learning rate")]
    LossIncreased {
        epoch: usize,
        before: f64,
        after: f64,
    },

    #[error("empty background set")]
    EmptyBackground,

    #[error("{p} features exceeds the exact Shapley cap of {cap}; use sampled mode")]
    TooManyFeatures { p: usize, cap: usize },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("singular normal equations even at ridge {0}")]
    Singular(f64),

    #[error("instance ids differ: {0:?} vs {1:?}")]
    InstanceMismatch(String, String),

    #[error("index {index} out of range ({len} rows)")]
    IndexOutOfRange { index: usize, len: usize },
}

impl Error {
    /// True for errors caused by bad input data rather than bad parameters.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Csv(_)
                | Error::RaggedRow { .. }
                | Error::DuplicateColumn(_)
                | Error::Shape(_)
                | Error::NoUsableFeatures
                | Error::UnseenLabels(_)
                | Error::SmoteTooFewSamples { .. }
                | Error::EmptyTable
                | Error::Divergence(_)
                | Error::LossIncreased { .. }
                | Error::Singular(_)
        )
    }
}
