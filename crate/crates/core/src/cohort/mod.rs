//! Synthetic cohort: schema, generation, missingness and imputation.

mod mice;
mod missing;
mod schema;
mod synth;
mod table;

pub use mice::{impute_mice, DEFAULT_MICE_CYCLES};
pub use missing::inject_missingness;
pub use schema::{FeatureCategory, FeatureDescriptor, FeatureKind, FeatureSchema, N_FEATURES};
pub use synth::{
    generate_cohort, generate_synthetic, standardization, GeneratorConfig, InteractionTerm, LinearTerm,
    PlantedRisk, SignalSpec, SyntheticCohort, ThresholdTerm, DEFAULT_PREVALENCE, REFERENCE_COHORT_SIZE,
};
pub use table::CohortTable;

/// Name of the outcome column in the CSV form.
pub const OUTCOME_COLUMN: &str = "death_1yr";
