use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cv::holdout_split;
use super::metrics::auc_roc;
use super::mlp::{LayerFile, MlpParams, N_INPUTS};
use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Share of the training rows held back for early stopping.
pub const EARLY_STOP_FRACTION: f64 = 0.1;

pub const MODEL_FORMAT: &str = "trustloop-mlp";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without validation AUC-ROC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub n_folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            patience: 10,
            seed: 17,
            n_folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch_size and patience must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.n_folds < 2 {
            return bad("n_folds must be at least 2");
        }
        Ok(())
    }
}

/// Per-feature centring and scaling fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub means: Vec<T>,
    pub scales: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let n = T::count(rows.len().max(1));
        let mut means = vec![T::zero(); p];
        for r in rows {
            for (m, &v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut scales = vec![T::zero(); p];
        for r in rows {
            for ((s, &v), &m) in scales.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in scales.iter_mut() {
            *s = (*s / n).sqrt();
            if *s <= T::epsilon() {
                *s = T::one();
            }
        }
        Standardizer { means, scales }
    }

    pub fn identity(p: usize) -> Self {
        Standardizer { means: vec![T::zero(); p], scales: vec![T::one(); p] }
    }

    pub fn apply_into(&self, x: &[T], out: &mut Vec<T>) {
        out.extend(x.iter().zip(&self.means).zip(&self.scales).map(|((&v, &m), &s)| (v - m) / s));
    }
}

/// Anything that maps a raw feature vector to a risk in [0, 1].
///
/// Surrogate fitting and sensitivity tables only need this view of the model,
/// which lets tests substitute planted functions for the network.
pub trait RiskScorer<T: Scalar>: Sync {
    fn risk(&self, x: &[T]) -> T;

    fn risk_batch(&self, rows: &[Vec<T>]) -> Vec<T> {
        rows.iter().map(|r| self.risk(r)).collect()
    }
}

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> RiskScorer<T> for F {
    fn risk(&self, x: &[T]) -> T {
        self(x)
    }
}

/// Trained network plus the input standardisation it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskModel<T> {
    pub scaler: Standardizer<T>,
    pub params: MlpParams<T>,
    pub config: TrainConfig,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl<T: Scalar> RiskModel<T> {
    pub fn predict(&self, x: &[T]) -> Result<T> {
        if x.len() != N_INPUTS {
            return Err(Error::InvalidInput(format!("expected {N_INPUTS} features, got {}", x.len())));
        }
        let mut z = Vec::with_capacity(N_INPUTS);
        self.scaler.apply_into(x, &mut z);
        self.params.forward(&z)
    }

    pub fn predict_rows(&self, rows: &[Vec<T>]) -> Vec<T> {
        let mut flat = Vec::with_capacity(rows.len() * N_INPUTS);
        for r in rows {
            self.scaler.apply_into(r, &mut flat);
        }
        self.params.forward_batch(&flat, rows.len())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_FORMAT_VERSION,
            layers: self.params.to_file(),
            scaler: self.scaler.clone(),
            train_config: self.config.clone(),
            best_epoch: self.best_epoch,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if file.scaler.means.len() != N_INPUTS || file.scaler.scales.len() != N_INPUTS {
            return Err(Error::Parse("scaler has wrong width".into()));
        }
        Ok(RiskModel {
            scaler: file.scaler,
            params: MlpParams::from_file(file.layers)?,
            config: file.train_config,
            best_epoch: file.best_epoch,
        })
    }
}

impl<T: Scalar> RiskScorer<T> for RiskModel<T> {
    fn risk(&self, x: &[T]) -> T {
        self.predict(x).expect("feature vector of schema width")
    }

    fn risk_batch(&self, rows: &[Vec<T>]) -> Vec<T> {
        self.predict_rows(rows)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelFile<T> {
    format: String,
    version: u32,
    layers: Vec<LayerFile<T>>,
    scaler: Standardizer<T>,
    train_config: TrainConfig,
    best_epoch: usize,
}

/// Trains the network by mini-batch momentum SGD on binary cross-entropy.
///
/// A stratified tenth of the rows is held back; the parameters from the epoch
/// with the best validation AUC-ROC are returned once `patience` epochs pass
/// without improvement.
pub fn train<T: Scalar>(cohort: &CohortTable<T>, config: &TrainConfig) -> Result<RiskModel<T>> {
    config.validate()?;
    let rows = cohort.dense()?;
    train_rows(&rows, cohort.outcomes(), config)
}

pub(crate) fn train_rows<T: Scalar>(rows: &[Vec<T>], labels: &[bool], config: &TrainConfig) -> Result<RiskModel<T>> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }
    if rows.iter().any(|r| r.len() != N_INPUTS) {
        return Err(Error::InvalidInput(format!("rows must have {N_INPUTS} features")));
    }

    let (fit_idx, val_idx) = if n_pos >= 2 && labels.len() - n_pos >= 2 {
        holdout_split(labels, EARLY_STOP_FRACTION, config.seed ^ 0x5eed_0001)?
    } else {
        let all: Vec<usize> = (0..labels.len()).collect();
        (all.clone(), all)
    };

    let fit_rows: Vec<Vec<T>> = fit_idx.iter().map(|&i| rows[i].clone()).collect();
    let scaler = Standardizer::fit(&fit_rows);
    let flatten = |idx: &[usize]| {
        let mut flat = Vec::with_capacity(idx.len() * N_INPUTS);
        for &i in idx {
            scaler.apply_into(&rows[i], &mut flat);
        }
        flat
    };
    let fit_x = flatten(&fit_idx);
    let fit_y: Vec<T> = fit_idx.iter().map(|&i| if labels[i] { T::one() } else { T::zero() }).collect();
    let val_x = flatten(&val_idx);
    let val_labels: Vec<bool> = val_idx.iter().map(|&i| labels[i]).collect();
    let val_y: Vec<T> = val_labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();

    let mut params = MlpParams::<T>::init(config.seed);
    let mut velocity = MlpParams::<T>::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let lr = T::lit(config.learning_rate);
    let mu = T::lit(config.momentum);

    let mut best = params.clone();
    let mut best_auc = T::neg_infinity();
    let mut best_loss = T::infinity();
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..fit_y.len()).collect();
    let mut bx: Vec<T> = Vec::with_capacity(config.batch_size * N_INPUTS);
    let mut by: Vec<T> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(&fit_x[i * N_INPUTS..(i + 1) * N_INPUTS]);
                by.push(fit_y[i]);
            }
            let (_, grad) = params.loss_and_grad(&bx, &by);
            for ((p, v), &g) in params
                .as_flat_mut()
                .iter_mut()
                .zip(velocity.as_flat_mut())
                .zip(grad.as_flat())
            {
                *v = mu * *v - lr * g;
                *p += *v;
            }
        }
        if !params.is_finite() {
            return Err(Error::InvalidInput(format!("training diverged at epoch {epoch}")));
        }
        let scores = params.forward_batch(&val_x, val_y.len());
        let auc = auc_roc(&scores, &val_labels)?;
        let loss = params.loss(&val_x, &val_y);
        let tol = T::lit(1e-12);
        if auc > best_auc + tol || (auc >= best_auc - tol && loss < best_loss) {
            best_auc = auc;
            best_loss = loss;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    Ok(RiskModel { scaler, params: best, config: config.clone(), best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::FeatureSchema;
    use crate::model::metrics::accuracy;
    use rand::Rng;

    /// 200 rows; outcome is `age > 60` with a margin around the boundary.
    fn separable() -> CohortTable<f64> {
        let schema = FeatureSchema::heart_failure();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let died = i % 2 == 0;
            let row: Vec<f64> = schema
                .features()
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    if j == 0 {
                        if died { rng.random_range(65.0..95.0) } else { rng.random_range(25.0..55.0) }
                    } else if f.is_binary() {
                        f64::from(rng.random_bool(0.5) as u8)
                    } else {
                        rng.random_range(f.min..f.max)
                    }
                })
                .collect();
            rows.push(row);
            labels.push(died);
        }
        CohortTable::from_dense(schema, rows, labels).unwrap()
    }

    #[test]
    fn fits_separable_cohort() {
        let cohort = separable();
        let cfg = TrainConfig { learning_rate: 0.05, patience: 30, ..Default::default() };
        let model = train(&cohort, &cfg).unwrap();
        let rows = cohort.dense().unwrap();
        let acc: f64 = accuracy(&model.predict_rows(&rows), cohort.outcomes()).unwrap();
        assert!(acc >= 0.99, "training accuracy {acc}");
        assert!(model.params.is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let cohort = separable();
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let a = train(&cohort, &cfg).unwrap();
        let b = train(&cohort, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_rejected() {
        let c = separable();
        let keep: Vec<usize> = (0..200).filter(|i| i % 2 == 0).collect();
        let only_dead = c.subset(&keep);
        assert!(matches!(train(&only_dead, &TrainConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn unimputed_cohort_rejected() {
        let c = crate::cohort::inject_missingness(&separable(), 0.3, 1).unwrap();
        assert!(train(&c, &TrainConfig::default()).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let c = separable();
        for cfg in [
            TrainConfig { n_folds: 1, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(train(&c, &cfg).is_err());
        }
    }

    #[test]
    fn model_file_round_trip() {
        let c = separable();
        let m = train(&c, &TrainConfig { epochs: 2, ..Default::default() }).unwrap();
        let back = RiskModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
