//! Neural risk model, linear baseline, metrics and cross-validation.

pub mod cv;
mod linear;
pub mod metrics;
mod mlp;
mod train;

pub use cv::{
    cross_validate, holdout_split, stratified_folds, CrossValidation, EvalReport, FoldMetrics, MetricSummary,
    ModelEval, LINEAR_REGRESSION, NEURAL_NETWORK, TEST_FRACTION,
};
pub use linear::{train_linear_baseline, LinearBaseline};
pub use metrics::{accuracy, auc_pr, auc_roc};
pub use mlp::{MlpParams, LAYER_SIZES, N_INPUTS, N_PARAMS};
pub use train::{train, RiskModel, RiskScorer, Standardizer, TrainConfig, EARLY_STOP_FRACTION};
