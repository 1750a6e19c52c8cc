//! Cross-validation splits, metrics, per-fold training, and experiment
//! orchestration.

mod config;
mod experiment;
mod metrics;
mod splits;
mod train;
mod verify;

pub use config::{ExperimentConfig, Protocol, Scheme, KEYS};
pub use experiment::{
    ablation_grid, fold_seed, fusion_grid, grid_row_dir, load_or_generate, metrics_csv, plan_for,
    repeat_seed, roc_consistent, roc_csv, run_experiment, run_on_cohort, site_accuracy_csv,
    write_artifacts, Aggregate, CohortSummary, ExperimentReport, ExperimentRun, GridRow, MeanStd,
    SiteAccuracy,
};
pub use metrics::{confusion_metrics, mean_std, roc_auc, trapezoid, Confusion, ConfusionMetrics, Roc};
pub use splits::{loso_split, stratified_kfold, Fold, SplitPlan, SplitScheme};
pub use train::{
    prepare_fold, state_hash, train_fold, CohortFeatures, FoldOutcome, FoldReport, Prediction,
    PreparedFold, DECISION_THRESHOLD,
};
pub use verify::{GradCheckInstance, GradCheckSetup};

use thiserror::Error;

use crate::dataio::DataError;
use crate::featprep::FeatureError;
use crate::numcore::TensorError;
use crate::popgraph::GraphError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("fold {fold}: loss became {value} at epoch {epoch}")]
    NonFiniteLoss { fold: usize, epoch: usize, value: f64 },
    #[error("fold {fold}: non-finite gradient for `{param}` at epoch {epoch}")]
    NonFiniteGradient { fold: usize, epoch: usize, param: String },
}

impl HarnessError {
    /// Stable identifier for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "config",
            HarnessError::Param(_) => "parameter",
            HarnessError::Io { .. } => "io",
            HarnessError::Data(_) => "data",
            HarnessError::Feature(_) => "features",
            HarnessError::Graph(_) => "graph",
            HarnessError::Tensor(_) => "tensor",
            HarnessError::NonFiniteLoss { .. } => "non_finite_loss",
            HarnessError::NonFiniteGradient { .. } => "non_finite_gradient",
        }
    }
}
