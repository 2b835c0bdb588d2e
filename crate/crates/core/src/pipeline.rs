//! End-to-end build: cohort → missingness → imputation → training →
//! evaluation → surrogates → evidence bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{generate_cohort, impute_mice, inject_missingness, GeneratorConfig, DEFAULT_MICE_CYCLES};
use crate::error::{Error, Result};
use crate::evidence::{
    assemble_catalog, build_sensitivity, fit_stratified_linear, fit_stratified_trees, select_patient_scenarios,
    AccuracySummary, CatalogParts, DataSummary, EvidenceCatalog, LocalLinear, LocalTree, Methodology, OutcomeCard,
    PatientCard, TreeConfig,
};
use crate::model::{cross_validate, train, EvalReport, TrainConfig, TEST_FRACTION};

pub const EVAL_REPORT_CSV: &str = "eval_report.csv";
pub const EVAL_REPORT_JSON: &str = "eval_report.json";
pub const MODEL_FILE: &str = "model.json";
pub const SCHEMA_FILE: &str = "schema.json";
pub const CONFIG_FILE: &str = "build_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cohort: GeneratorConfig,
    pub missing_rate: f64,
    pub missing_seed: u64,
    pub mice_cycles: usize,
    pub train: TrainConfig,
    pub tree: TreeConfig,
    pub scenario_seed: u64,
    pub sensitivity_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cohort: GeneratorConfig::default(),
            missing_rate: 0.1,
            missing_seed: 11,
            mice_cycles: DEFAULT_MICE_CYCLES,
            train: TrainConfig::default(),
            tree: TreeConfig::default(),
            scenario_seed: 23,
            sensitivity_seed: 29,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Sets every seed from one root seed.
    pub fn reseed(&mut self, seed: u64) {
        self.cohort.seed = seed;
        self.missing_seed = seed.wrapping_add(1);
        self.train.seed = seed.wrapping_add(2);
        self.scenario_seed = seed.wrapping_add(3);
        self.sensitivity_seed = seed.wrapping_add(4);
    }
}

#[derive(Clone, Debug)]
pub struct BuildOutput {
    pub catalog: EvidenceCatalog,
    pub evaluation: EvalReport<f64>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
}

/// Runs every stage; pure in `config`.
pub fn build(config: &PipelineConfig) -> Result<(BuildOutput, crate::Model)> {
    let cohort = stage("generate", generate_cohort::<f64>(&config.cohort))?;
    let observed = stage("missingness", inject_missingness(&cohort, config.missing_rate, config.missing_seed))?;
    let imputed = stage("impute", impute_mice(&observed, config.mice_cycles))?;
    let cv = stage("evaluate", cross_validate(&imputed, &config.train))?;
    let train_part = imputed.subset(&cv.train_indices);
    let model = stage("train", train(&train_part, &config.train))?;

    let linear = stage("surrogates", fit_stratified_linear(&model, &train_part))?;
    let trees = stage("surrogates", fit_stratified_trees(&model, &train_part, &config.tree))?;
    let scenarios = stage("scenarios", select_patient_scenarios(&model, &imputed, &cv.test_indices, config.scenario_seed))?;
    let schema = imputed.schema();
    let sensitivity = stage(
        "sensitivity",
        scenarios
            .iter()
            .map(|p| build_sensitivity(&model, schema, &p.features, config.sensitivity_seed ^ p.patient_id as u64))
            .collect::<Result<Vec<_>>>(),
    )?;
    let parts = CatalogParts {
        data: Some(DataSummary::from_cohort(&observed)),
        methodology: Some(Methodology::new(&config.train, TEST_FRACTION, config.mice_cycles, config.tree.max_depth)),
        accuracy: Some(stage("catalog", AccuracySummary::from_report(&cv.report))?),
        patient_info: Some(scenarios.iter().map(|p| PatientCard::new(p, schema)).collect()),
        sensitivity: Some(sensitivity),
        local_linear: Some(stage("catalog", scenarios.iter().map(|p| LocalLinear::new(p, &linear)).collect())?),
        local_tree: Some(stage("catalog", scenarios.iter().map(|p| LocalTree::new(p, &trees)).collect())?),
        outcome: Some(scenarios.iter().map(OutcomeCard::new).collect()),
        stratified_linear: Some(linear),
        stratified_tree: Some(trees),
    };
    let catalog = stage("catalog", assemble_catalog(parts))?;
    Ok((BuildOutput { catalog, evaluation: cv.report }, model))
}

/// Builds and writes the bundle, evaluation report, model, schema and resolved config into `dir`.
pub fn build_bundle(config: &PipelineConfig, dir: &Path) -> Result<BuildOutput> {
    let (out, model) = build(config)?;
    stage("write", write_outputs(config, &out, &model, dir))?;
    Ok(out)
}

fn write_outputs(config: &PipelineConfig, out: &BuildOutput, model: &crate::Model, dir: &Path) -> Result<()> {
    out.catalog.write_bundle(dir)?;
    fs::write(dir.join(EVAL_REPORT_CSV), out.evaluation.to_csv())?;
    fs::write(dir.join(EVAL_REPORT_JSON), serde_json::to_string_pretty(&out.evaluation)? + "\n")?;
    fs::write(dir.join(MODEL_FILE), model.to_json()?)?;
    fs::write(dir.join(SCHEMA_FILE), crate::cohort::FeatureSchema::heart_failure().to_json()?)?;
    fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

/// A small catalog built in milliseconds from a synthetic banded scorer over
/// uniformly drawn rows. Shapes match a real build; the numbers mean nothing.
pub fn demo_catalog(seed: u64) -> Result<EvidenceCatalog> {
    use rand::{Rng, SeedableRng};

    let schema = crate::cohort::FeatureSchema::heart_failure();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..1200)
        .map(|_| {
            schema
                .features()
                .iter()
                .map(|d| if d.is_binary() { f64::from(u8::from(rng.random_bool(0.5))) } else { rng.random_range(d.min..d.max) })
                .collect()
        })
        .collect();
    let outcomes: Vec<bool> = (0..rows.len()).map(|_| rng.random_bool(0.188)).collect();
    let cohort = crate::Cohort::from_dense(schema.clone(), rows, outcomes)?;
    let age = schema.index_of("age").expect("age feature");
    let ef = schema.index_of("ejection_fraction").expect("ejection_fraction feature");
    let (a, e) = (schema.get(age).clone(), schema.get(ef).clone());
    let scorer = move |x: &[f64]| {
        let u = (x[age] - a.min) / (a.max - a.min);
        let v = (x[ef] - e.min) / (e.max - e.min);
        (0.7 * u + 0.3 * (1.0 - v)).clamp(0.0, 1.0)
    };
    let test: Vec<usize> = (1000..1200).collect();
    let train_part = cohort.subset(&(0..1000).collect::<Vec<_>>());
    let linear = fit_stratified_linear(&scorer, &train_part)?;
    let trees = fit_stratified_trees(&scorer, &train_part, &TreeConfig::default())?;
    let scenarios = select_patient_scenarios(&scorer, &cohort, &test, seed)?;
    let f = |m: f64| crate::model::FoldMetrics { accuracy: 0.8, auc_roc: m, auc_pr: m / 2.0 };
    let report = EvalReport {
        n_folds: 2,
        test_fraction: TEST_FRACTION,
        models: vec![
            crate::model::ModelEval::from_folds(crate::model::NEURAL_NETWORK, vec![f(0.72), f(0.73)]),
            crate::model::ModelEval::from_folds(crate::model::LINEAR_REGRESSION, vec![f(0.57), f(0.58)]),
        ],
    };
    let parts = CatalogParts {
        data: Some(DataSummary::from_cohort(&cohort)),
        methodology: Some(Methodology::new(&TrainConfig::default(), TEST_FRACTION, DEFAULT_MICE_CYCLES, 3)),
        accuracy: Some(AccuracySummary::from_report(&report)?),
        patient_info: Some(scenarios.iter().map(|p| PatientCard::new(p, &schema)).collect()),
        sensitivity: Some(
            scenarios
                .iter()
                .map(|p| build_sensitivity(&scorer, &schema, &p.features, seed ^ p.patient_id as u64))
                .collect::<Result<_>>()?,
        ),
        local_linear: Some(scenarios.iter().map(|p| LocalLinear::new(p, &linear)).collect::<Result<_>>()?),
        local_tree: Some(scenarios.iter().map(|p| LocalTree::new(p, &trees)).collect::<Result<_>>()?),
        outcome: Some(scenarios.iter().map(OutcomeCard::new).collect()),
        stratified_linear: Some(linear),
        stratified_tree: Some(trees),
    };
    assemble_catalog(parts)
}
