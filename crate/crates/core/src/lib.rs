//! Learning which sequence of model evidence earns a rater's trust in a clinical
//! risk model.
//!
//! The crate covers the numeric side of the loop: a synthetic heart-failure
//! cohort with chained-equations imputation, a two-hidden-layer neural risk model
//! with a linear baseline and cross-validated ranking metrics, stratified
//! surrogate explanations, the UCB1 bandit over evidence sequences, simulated
//! raters, and report aggregation.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the `f64` instantiations used by the pipeline and the service.

pub mod bandit;
pub mod cohort;
pub mod error;
pub mod evidence;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod rater;
pub mod report;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Cohort = cohort::CohortTable<f64>;
pub type Mlp = model::MlpParams<f64>;
pub type Model = model::RiskModel<f64>;
pub type Evaluation = model::EvalReport<f64>;
