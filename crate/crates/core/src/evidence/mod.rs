//! Evidence shown to survey participants: global summaries, stratified
//! surrogates of the risk model, and per-patient views.

mod catalog;
mod kind;
mod patients;
mod strata;
mod tree;

pub use catalog::{
    assemble_catalog, AccuracySummary, CatalogParts, DataSummary, EvidenceCatalog, EvidenceItem, FeatureStats,
    Manifest, Methodology, ModelAccuracy, BUNDLE_FORMAT, BUNDLE_SCHEMA_VERSION, MANIFEST_FILE,
};
pub use kind::EvidenceKind;
pub use patients::{
    build_sensitivity, choose_sensitivity_features, select_patient_scenarios, sensitivity_for, sensitivity_grid, Contribution,
    LocalLinear, LocalTree, OutcomeCard, PathStep, PatientCard, PatientFeature, PatientScenario, SensitivityFeature,
    SensitivityPoint, SensitivityTable, N_SENSITIVITY_FEATURES, SENSITIVITY_GRID_POINTS, TARGET_RISKS,
};
pub use strata::{
    fit_stratified_linear, stratum_of, CoefficientRow, StratumLinear, MIN_STRATUM_ROWS, N_STRATA, SIGNIFICANCE_LEVEL,
};
pub use tree::{fit_stratified_trees, fit_tree, StratumTree, TreeConfig, TreeNode};
