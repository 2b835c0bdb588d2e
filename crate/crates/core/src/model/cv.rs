//! Stratified splitting and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::fit_rows as fit_linear;
use super::metrics::{accuracy, auc_pr, auc_roc};
use super::train::{train_rows, TrainConfig};
use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::scalar::{mean, sample_std, Scalar};

/// Share of the cohort reserved, before folding, as the untouched test partition.
pub const TEST_FRACTION: f64 = 0.1;

pub const NEURAL_NETWORK: &str = "neural_network";
pub const LINEAR_REGRESSION: &str = "linear_regression";

fn shuffled_classes(labels: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    (pos, neg)
}

/// Fold index per row. Each class is shuffled and dealt round-robin with a single
/// running counter, so folds differ in size by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidConfig("need at least 2 folds".into()));
    }
    let (pos, neg) = shuffled_classes(labels, seed);
    let minority = pos.len().min(neg.len());
    if k > minority {
        return Err(Error::InvalidConfig(format!(
            "{k} folds but the minority class has only {minority} rows"
        )));
    }
    let mut fold = vec![0; labels.len()];
    for (c, &i) in pos.iter().chain(&neg).enumerate() {
        fold[i] = c % k;
    }
    Ok(fold)
}

/// Stratified split into (kept, held out) index lists, both ascending.
pub fn holdout_split(labels: &[bool], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("holdout fraction {fraction} must lie in (0, 1)")));
    }
    let (pos, neg) = shuffled_classes(labels, seed);
    let mut kept = Vec::new();
    let mut held = Vec::new();
    for class in [pos, neg] {
        let take = ((class.len() as f64 * fraction).round() as usize).min(class.len().saturating_sub(1));
        let take = if class.len() >= 2 { take.max(1) } else { take };
        held.extend_from_slice(&class[..take]);
        kept.extend_from_slice(&class[take..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    Ok((kept, held))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricSummary<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> MetricSummary<T> {
    /// Mean and sample standard deviation across folds.
    pub fn from_values(values: &[T]) -> Self {
        MetricSummary { mean: mean(values).unwrap_or_else(T::zero), std: sample_std(values) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FoldMetrics<T> {
    pub accuracy: T,
    pub auc_roc: T,
    pub auc_pr: T,
}

impl<T: Scalar> FoldMetrics<T> {
    pub fn evaluate(scores: &[T], labels: &[bool]) -> Result<Self> {
        Ok(FoldMetrics {
            accuracy: accuracy(scores, labels)?,
            auc_roc: auc_roc(scores, labels)?,
            auc_pr: auc_pr(scores, labels)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelEval<T> {
    pub model: String,
    pub folds: Vec<FoldMetrics<T>>,
    pub accuracy: MetricSummary<T>,
    pub auc_roc: MetricSummary<T>,
    pub auc_pr: MetricSummary<T>,
}

impl<T: Scalar> ModelEval<T> {
    pub fn from_folds(model: &str, folds: Vec<FoldMetrics<T>>) -> Self {
        let col = |f: fn(&FoldMetrics<T>) -> T| MetricSummary::from_values(&folds.iter().map(f).collect::<Vec<_>>());
        ModelEval {
            model: model.to_owned(),
            accuracy: col(|m| m.accuracy),
            auc_roc: col(|m| m.auc_roc),
            auc_pr: col(|m| m.auc_pr),
            folds,
        }
    }
}

/// Cross-validated metrics for the network and the linear baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub n_folds: usize,
    pub test_fraction: f64,
    pub models: Vec<ModelEval<T>>,
}

impl<T: Scalar> EvalReport<T> {
    pub fn model(&self, name: &str) -> Option<&ModelEval<T>> {
        self.models.iter().find(|m| m.model == name)
    }

    /// `model,metric,mean,std` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,metric,mean,std\n");
        for m in &self.models {
            for (name, v) in [("accuracy", m.accuracy), ("auc_roc", m.auc_roc), ("auc_pr", m.auc_pr)] {
                s.push_str(&format!("{},{},{},{}\n", m.model, name, v.mean, v.std));
            }
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct CrossValidation<T> {
    pub report: EvalReport<T>,
    /// Rows available for training (everything outside the test partition).
    pub train_indices: Vec<usize>,
    /// Held-out rows never seen during cross-validation.
    pub test_indices: Vec<usize>,
}

/// Reserves a stratified test partition, then runs stratified k-fold
/// cross-validation of the network and the linear baseline on the rest.
/// Folds train in parallel, each with its own seed.
pub fn cross_validate<T: Scalar>(cohort: &CohortTable<T>, config: &TrainConfig) -> Result<CrossValidation<T>> {
    config.validate()?;
    let rows = cohort.dense()?;
    let labels = cohort.outcomes();
    let (train_indices, test_indices) = holdout_split(labels, TEST_FRACTION, config.seed)?;
    let train_labels: Vec<bool> = train_indices.iter().map(|&i| labels[i]).collect();
    let folds = stratified_folds(&train_labels, config.n_folds, config.seed.wrapping_add(1))?;

    let results: Vec<(FoldMetrics<T>, FoldMetrics<T>)> = (0..config.n_folds)
        .into_par_iter()
        .map(|k| {
            let (mut fit_x, mut fit_y, mut val_x, mut val_y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (pos, &i) in train_indices.iter().enumerate() {
                if folds[pos] == k {
                    val_x.push(rows[i].clone());
                    val_y.push(labels[i]);
                } else {
                    fit_x.push(rows[i].clone());
                    fit_y.push(labels[i]);
                }
            }
            let fold_cfg = TrainConfig { seed: config.seed.wrapping_add(1000 + k as u64), ..config.clone() };
            let nn = train_rows(&fit_x, &fit_y, &fold_cfg)?;
            let nn_metrics = FoldMetrics::evaluate(&nn.predict_rows(&val_x), &val_y)?;
            let lin = fit_linear(&fit_x, &fit_y)?;
            let lin_scores: Vec<T> = val_x.iter().map(|r| lin.score(r)).collect();
            let lin_metrics = FoldMetrics::evaluate(&lin_scores, &val_y)?;
            Ok((nn_metrics, lin_metrics))
        })
        .collect::<Result<_>>()?;

    let (nn, lin): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(CrossValidation {
        report: EvalReport {
            n_folds: config.n_folds,
            test_fraction: TEST_FRACTION,
            models: vec![
                ModelEval::from_folds(NEURAL_NETWORK, nn),
                ModelEval::from_folds(LINEAR_REGRESSION, lin),
            ],
        },
        train_indices,
        test_indices,
    })
}
