//! Typed evidence catalog and its on-disk bundle form.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::kind::EvidenceKind;
use super::patients::{LocalLinear, LocalTree, OutcomeCard, PatientCard, SensitivityTable};
use super::strata::StratumLinear;
use super::tree::StratumTree;
use crate::cohort::{CohortTable, FeatureCategory, FeatureKind};
use crate::error::{Error, Result};
use crate::model::{EvalReport, MetricSummary, TrainConfig, LAYER_SIZES, LINEAR_REGRESSION, NEURAL_NETWORK};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_FORMAT: &str = "trustloop-bundle";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub kind: FeatureKind,
    pub category: FeatureCategory,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub missing_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_patients: usize,
    pub n_features: usize,
    pub prevalence: f64,
    pub outcome: String,
    pub features: Vec<FeatureStats>,
}

impl DataSummary {
    /// Summarises observed values; missing cells only count towards `missing_fraction`.
    pub fn from_cohort(cohort: &CohortTable<f64>) -> Self {
        let n = cohort.len();
        let features = cohort
            .schema()
            .features()
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let vals: Vec<f64> = cohort.rows().iter().filter_map(|r| r[j]).collect();
                let m = vals.len().max(1) as f64;
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len().max(2) - 1) as f64;
                FeatureStats {
                    name: d.name.clone(),
                    kind: d.kind,
                    category: d.category,
                    mean,
                    std: var.sqrt(),
                    min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                    max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    missing_fraction: if n == 0 { 0.0 } else { (n - vals.len()) as f64 / n as f64 },
                }
            })
            .collect();
        DataSummary {
            n_patients: n,
            n_features: cohort.schema().len(),
            prevalence: cohort.prevalence(),
            outcome: "death within one year".to_owned(),
            features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Methodology {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub loss: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stopping_patience: usize,
    pub n_folds: usize,
    pub test_fraction: f64,
    pub imputation: String,
    pub imputation_cycles: usize,
    pub surrogate_tree_max_depth: usize,
}

impl Methodology {
    pub fn new(train: &TrainConfig, test_fraction: f64, mice_cycles: usize, tree_depth: usize) -> Self {
        Methodology {
            layer_sizes: LAYER_SIZES.to_vec(),
            hidden_activation: "relu".into(),
            output_activation: "sigmoid".into(),
            loss: "binary cross-entropy".into(),
            optimizer: "mini-batch SGD with momentum".into(),
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            batch_size: train.batch_size,
            max_epochs: train.epochs,
            early_stopping_patience: train.patience,
            n_folds: train.n_folds,
            test_fraction,
            imputation: "multiple imputation by chained equations".into(),
            imputation_cycles: mice_cycles,
            surrogate_tree_max_depth: tree_depth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelAccuracy {
    pub accuracy: MetricSummary<f64>,
    pub auc_roc: MetricSummary<f64>,
    pub auc_pr: MetricSummary<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub n_folds: usize,
    pub neural_network: ModelAccuracy,
    pub linear_regression: ModelAccuracy,
}

impl AccuracySummary {
    pub fn from_report(report: &EvalReport<f64>) -> Result<Self> {
        let get = |name: &str| {
            report
                .model(name)
                .map(|m| ModelAccuracy { accuracy: m.accuracy, auc_roc: m.auc_roc, auc_pr: m.auc_pr })
                .ok_or_else(|| Error::MissingArtifact(format!("evaluation for {name}")))
        };
        Ok(AccuracySummary {
            n_folds: report.n_folds,
            neural_network: get(NEURAL_NETWORK)?,
            linear_regression: get(LINEAR_REGRESSION)?,
        })
    }
}

/// Everything a survey participant can be shown. Patient-specific vectors are
/// parallel and indexed by scenario position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCatalog {
    pub data: DataSummary,
    pub methodology: Methodology,
    pub accuracy: AccuracySummary,
    pub stratified_linear: Vec<StratumLinear<f64>>,
    pub stratified_tree: Vec<StratumTree<f64>>,
    pub patient_info: Vec<PatientCard<f64>>,
    pub sensitivity: Vec<SensitivityTable<f64>>,
    pub local_linear: Vec<LocalLinear<f64>>,
    pub local_tree: Vec<LocalTree<f64>>,
    pub outcome: Vec<OutcomeCard<f64>>,
}

/// Artifacts collected before assembly; any may still be missing.
#[derive(Clone, Debug, Default)]
pub struct CatalogParts {
    pub data: Option<DataSummary>,
    pub methodology: Option<Methodology>,
    pub accuracy: Option<AccuracySummary>,
    pub stratified_linear: Option<Vec<StratumLinear<f64>>>,
    pub stratified_tree: Option<Vec<StratumTree<f64>>>,
    pub patient_info: Option<Vec<PatientCard<f64>>>,
    pub sensitivity: Option<Vec<SensitivityTable<f64>>>,
    pub local_linear: Option<Vec<LocalLinear<f64>>>,
    pub local_tree: Option<Vec<LocalTree<f64>>>,
    pub outcome: Option<Vec<OutcomeCard<f64>>>,
}

fn need<T>(v: Option<T>, kind: EvidenceKind) -> Result<T> {
    v.ok_or_else(|| Error::MissingArtifact(kind.as_str().to_owned()))
}

/// Checks every kind is present and patient vectors line up.
pub fn assemble_catalog(parts: CatalogParts) -> Result<EvidenceCatalog> {
    use EvidenceKind as K;
    let c = EvidenceCatalog {
        data: need(parts.data, K::Data)?,
        methodology: need(parts.methodology, K::Methodology)?,
        accuracy: need(parts.accuracy, K::Accuracy)?,
        stratified_linear: need(parts.stratified_linear, K::StratifiedLinear)?,
        stratified_tree: need(parts.stratified_tree, K::StratifiedTree)?,
        patient_info: need(parts.patient_info, K::PatientInfo)?,
        sensitivity: need(parts.sensitivity, K::Sensitivity)?,
        local_linear: need(parts.local_linear, K::LocalLinear)?,
        local_tree: need(parts.local_tree, K::LocalTree)?,
        outcome: need(parts.outcome, K::Outcome)?,
    };
    c.validate()?;
    Ok(c)
}

/// One renderable piece of evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub kind: EvidenceKind,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub patient_index: Option<usize>,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub schema_version: u32,
    pub n_patients: usize,
    pub files: BTreeMap<EvidenceKind, String>,
}

impl EvidenceCatalog {
    pub fn n_patients(&self) -> usize {
        self.patient_info.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.patient_info.len();
        if n == 0 {
            return Err(Error::MissingArtifact("patient scenarios".into()));
        }
        let lens = [self.sensitivity.len(), self.local_linear.len(), self.local_tree.len(), self.outcome.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidInput(format!("patient evidence lengths {lens:?} differ from {n} scenarios")));
        }
        if self.stratified_linear.is_empty() || self.stratified_tree.is_empty() {
            return Err(Error::MissingArtifact("stratified surrogates".into()));
        }
        Ok(())
    }

    fn payload(&self, kind: EvidenceKind, patient: Option<usize>) -> Result<serde_json::Value> {
        use EvidenceKind as K;
        let at = |len: usize| -> Result<usize> {
            match patient {
                Some(i) if i < len => Ok(i),
                Some(i) => Err(Error::InvalidInput(format!("patient index {i} out of range"))),
                None => Err(Error::InvalidInput(format!("{kind} needs a patient index"))),
            }
        };
        if !kind.is_patient_specific() && patient.is_some() {
            return Err(Error::InvalidInput(format!("{kind} is not patient specific")));
        }
        let v = match kind {
            K::Data => serde_json::to_value(&self.data),
            K::Methodology => serde_json::to_value(&self.methodology),
            K::Accuracy => serde_json::to_value(&self.accuracy),
            K::StratifiedLinear => serde_json::to_value(&self.stratified_linear),
            K::StratifiedTree => serde_json::to_value(&self.stratified_tree),
            K::PatientInfo => serde_json::to_value(&self.patient_info[at(self.patient_info.len())?]),
            K::Sensitivity => serde_json::to_value(&self.sensitivity[at(self.sensitivity.len())?]),
            K::LocalLinear => serde_json::to_value(&self.local_linear[at(self.local_linear.len())?]),
            K::LocalTree => serde_json::to_value(&self.local_tree[at(self.local_tree.len())?]),
            K::Outcome => serde_json::to_value(&self.outcome[at(self.outcome.len())?]),
        };
        Ok(v?)
    }

    /// The displayable item for `kind`; patient-specific kinds need `patient`.
    pub fn item(&self, kind: EvidenceKind, patient: Option<usize>) -> Result<EvidenceItem> {
        Ok(EvidenceItem {
            kind,
            title: kind.title().to_owned(),
            patient_index: patient,
            payload: self.payload(kind, patient)?,
        })
    }

    /// All items grouped by kind; patient kinds hold one item per scenario.
    pub fn items_by_kind(&self) -> Result<BTreeMap<EvidenceKind, Vec<EvidenceItem>>> {
        EvidenceKind::ALL
            .into_iter()
            .map(|k| {
                let items = if k.is_patient_specific() {
                    (0..self.n_patients()).map(|i| self.item(k, Some(i))).collect::<Result<_>>()?
                } else {
                    vec![self.item(k, None)?]
                };
                Ok((k, items))
            })
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: BUNDLE_FORMAT.to_owned(),
            schema_version: BUNDLE_SCHEMA_VERSION,
            n_patients: self.n_patients(),
            files: EvidenceKind::ALL.into_iter().map(|k| (k, format!("{}.json", k.as_str()))).collect(),
        }
    }

    /// Writes one JSON file per evidence kind plus a manifest into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        use EvidenceKind as K;
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (kind, file) in &manifest.files {
            let text = match kind {
                K::Data => serde_json::to_string_pretty(&self.data),
                K::Methodology => serde_json::to_string_pretty(&self.methodology),
                K::Accuracy => serde_json::to_string_pretty(&self.accuracy),
                K::StratifiedLinear => serde_json::to_string_pretty(&self.stratified_linear),
                K::StratifiedTree => serde_json::to_string_pretty(&self.stratified_tree),
                K::PatientInfo => serde_json::to_string_pretty(&self.patient_info),
                K::Sensitivity => serde_json::to_string_pretty(&self.sensitivity),
                K::LocalLinear => serde_json::to_string_pretty(&self.local_linear),
                K::LocalTree => serde_json::to_string_pretty(&self.local_tree),
                K::Outcome => serde_json::to_string_pretty(&self.outcome),
            }?;
            fs::write(dir.join(file), text + "\n")?;
        }
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Loads a bundle written by [`write_bundle`](Self::write_bundle).
    pub fn read_bundle(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
        if manifest.format != BUNDLE_FORMAT || manifest.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported bundle {} v{}",
                manifest.format, manifest.schema_version
            )));
        }
        let parts = CatalogParts {
            data: load(dir, &manifest, EvidenceKind::Data)?,
            methodology: load(dir, &manifest, EvidenceKind::Methodology)?,
            accuracy: load(dir, &manifest, EvidenceKind::Accuracy)?,
            stratified_linear: load(dir, &manifest, EvidenceKind::StratifiedLinear)?,
            stratified_tree: load(dir, &manifest, EvidenceKind::StratifiedTree)?,
            patient_info: load(dir, &manifest, EvidenceKind::PatientInfo)?,
            sensitivity: load(dir, &manifest, EvidenceKind::Sensitivity)?,
            local_linear: load(dir, &manifest, EvidenceKind::LocalLinear)?,
            local_tree: load(dir, &manifest, EvidenceKind::LocalTree)?,
            outcome: load(dir, &manifest, EvidenceKind::Outcome)?,
        };
        assemble_catalog(parts)
    }
}

fn load<V: DeserializeOwned>(dir: &Path, manifest: &Manifest, kind: EvidenceKind) -> Result<Option<V>> {
    let Some(file) = manifest.files.get(&kind) else {
        return Ok(None);
    };
    let path = dir.join(file);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}
