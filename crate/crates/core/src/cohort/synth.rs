//! Synthetic heart-failure-like cohort with a planted, recoverable risk function.
//!
//! Features are driven by three latent factors (frailty, cardiac dysfunction,
//! renal/metabolic load) so columns are correlated the way clinical variables are.
//! The outcome is Bernoulli on a planted logit mixing linear, pairwise and
//! threshold terms; the intercept is solved so the expected prevalence hits the
//! configured target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::schema::{FeatureKind, FeatureSchema};
use super::table::CohortTable;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// One-year mortality in the reference cohort.
pub const DEFAULT_PREVALENCE: f64 = 0.188;

/// Reference cohort size.
pub const REFERENCE_COHORT_SIZE: usize = 30_389;

const N_LATENT: usize = 3;

/// How a single column is generated from the latent factors.
#[derive(Clone, Copy, Debug)]
enum FeatureModel {
    /// `center + scale * (loading·z + sqrt(1 - |loading|²)·e)`, clamped to range.
    Continuous {
        center: f64,
        scale: f64,
        loading: [f64; N_LATENT],
    },
    /// `1[loading·z + sqrt(1 - |loading|²)·e > Φ⁻¹(1 - rate)]`.
    Binary { rate: f64, loading: [f64; N_LATENT] },
}

fn feature_model(name: &str) -> FeatureModel {
    use FeatureModel::*;
    let c = |center, scale, loading| Continuous { center, scale, loading };
    let b = |rate, loading| Binary { rate, loading };
    match name {
        "age" => c(70.0, 11.0, [0.85, 0.1, 0.2]),
        "male" => b(0.62, [0.0, 0.2, 0.0]),
        "bmi" => c(27.5, 5.0, [-0.5, 0.0, 0.6]),
        "current_smoker" => b(0.2, [-0.5, 0.2, 0.0]),
        "systolic_bp" => c(125.0, 20.0, [0.2, -0.6, 0.5]),
        "diastolic_bp" => c(74.0, 12.0, [-0.3, -0.6, 0.4]),
        "heart_rate" => c(78.0, 14.0, [0.0, 0.8, 0.1]),
        "ejection_fraction" => c(35.0, 12.0, [0.1, -0.85, 0.0]),
        "creatinine" => c(1.3, 0.45, [0.4, 0.2, 0.75]),
        "sodium" => c(138.0, 4.0, [-0.2, -0.5, -0.6]),
        "hemoglobin" => c(13.0, 1.8, [-0.5, -0.1, -0.65]),
        "potassium" => c(4.4, 0.5, [0.1, 0.1, 0.75]),
        "nyha_class" => c(2.4, 0.8, [0.4, 0.75, 0.1]),
        "hf_duration_years" => c(5.0, 4.0, [0.7, 0.3, 0.0]),
        "diabetes" => b(0.3, [0.1, 0.0, 0.7]),
        "copd" => b(0.15, [0.6, 0.1, 0.0]),
        "hypertension" => b(0.55, [0.3, 0.0, 0.6]),
        "atrial_fibrillation" => b(0.3, [0.6, 0.3, 0.0]),
        "prior_mi" => b(0.4, [0.2, 0.6, 0.0]),
        "dyspnea_at_rest" => b(0.2, [0.1, 0.75, 0.0]),
        "orthopnea" => b(0.25, [0.0, 0.7, 0.1]),
        "peripheral_edema" => b(0.35, [0.2, 0.5, 0.4]),
        "fatigue" => b(0.5, [0.4, 0.5, 0.0]),
        "beta_blocker" => b(0.7, [-0.3, 0.4, 0.0]),
        "ace_inhibitor" => b(0.6, [0.0, 0.4, -0.4]),
        "arb" => b(0.2, [0.0, 0.1, 0.4]),
        "loop_diuretic" => b(0.75, [0.1, 0.6, 0.3]),
        "spironolactone" => b(0.3, [0.0, 0.6, 0.0]),
        "digoxin" => b(0.2, [0.3, 0.5, 0.0]),
        "statin" => b(0.5, [0.3, 0.0, 0.4]),
        "anticoagulant" => b(0.3, [0.6, 0.2, 0.0]),
        _ => c(0.0, 1.0, [0.0; N_LATENT]),
    }
}

/// Centre and scale used to standardise a feature inside planted terms.
/// Binary features are used raw (centre 0, scale 1).
pub fn standardization(name: &str) -> (f64, f64) {
    match feature_model(name) {
        FeatureModel::Continuous { center, scale, .. } => (center, scale),
        FeatureModel::Binary { .. } => (0.0, 1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub feature: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTerm {
    pub feature: String,
    /// Cut point on the raw (unstandardised) feature scale.
    pub cut: f64,
    /// Fires when the value is above the cut; otherwise when below it.
    pub above: bool,
    pub weight: f64,
}

/// Planted logit: sum of linear, pairwise and threshold contributions.
///
/// Continuous features enter linear and pairwise terms standardised by
/// [`standardization`]; a pairwise term of a feature with itself is centred
/// (`z² - 1`) so it carries no linear component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub linear: Vec<LinearTerm>,
    pub interactions: Vec<InteractionTerm>,
    pub thresholds: Vec<ThresholdTerm>,
}

impl Default for SignalSpec {
    fn default() -> Self {
        let lin = |f: &str, w| LinearTerm { feature: f.into(), weight: w };
        let int = |a: &str, b: &str, w| InteractionTerm { a: a.into(), b: b.into(), weight: w };
        let thr = |f: &str, cut, above, w| ThresholdTerm { feature: f.into(), cut, above, weight: w };
        SignalSpec {
            linear: vec![
                lin("age", 0.30),
                lin("ejection_fraction", -0.20),
                lin("nyha_class", 0.20),
                lin("hemoglobin", -0.10),
                lin("beta_blocker", -0.20),
            ],
            interactions: vec![
                int("bmi", "bmi", 0.55),
                int("systolic_bp", "systolic_bp", 0.55),
                int("sodium", "sodium", 0.40),
                int("age", "heart_rate", 0.45),
                int("creatinine", "potassium", 0.35),
            ],
            thresholds: vec![
                thr("creatinine", 2.2, true, 0.7),
                thr("ejection_fraction", 25.0, false, 0.4),
            ],
        }
    }
}

/// The planted risk function with a resolved intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedRisk {
    pub intercept: f64,
    linear: Vec<(usize, f64, f64, f64)>,
    interactions: Vec<(usize, usize, f64, f64, f64, f64, f64)>,
    thresholds: Vec<(usize, f64, bool, f64)>,
}

impl PlantedRisk {
    fn compile(signal: &SignalSpec, schema: &FeatureSchema) -> Result<Self> {
        let idx = |name: &str| {
            schema
                .index_of(name)
                .ok_or_else(|| Error::InvalidConfig(format!("signal references unknown feature `{name}`")))
        };
        let mut linear = Vec::new();
        for t in &signal.linear {
            let (c, s) = standardization(&t.feature);
            linear.push((idx(&t.feature)?, c, s, t.weight));
        }
        let mut interactions = Vec::new();
        for t in &signal.interactions {
            let (ca, sa) = standardization(&t.a);
            let (cb, sb) = standardization(&t.b);
            interactions.push((idx(&t.a)?, idx(&t.b)?, ca, sa, cb, sb, t.weight));
        }
        let mut thresholds = Vec::new();
        for t in &signal.thresholds {
            thresholds.push((idx(&t.feature)?, t.cut, t.above, t.weight));
        }
        Ok(PlantedRisk { intercept: 0.0, linear, interactions, thresholds })
    }

    /// Logit without the intercept.
    pub fn score(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for &(j, c, sc, w) in &self.linear {
            s += w * (x[j] - c) / sc;
        }
        for &(a, b, ca, sa, cb, sb, w) in &self.interactions {
            let za = (x[a] - ca) / sa;
            let zb = (x[b] - cb) / sb;
            s += if a == b { w * (za * za - 1.0) } else { w * za * zb };
        }
        for &(j, cut, above, w) in &self.thresholds {
            let fires = if above { x[j] > cut } else { x[j] < cut };
            if fires {
                s += w;
            }
        }
        s
    }

    pub fn risk(&self, x: &[f64]) -> f64 {
        sigmoid(self.intercept + self.score(x))
    }

    /// Resolves the intercept so the mean planted risk over `rows` equals `prevalence`.
    pub fn calibrate(signal: &SignalSpec, schema: &FeatureSchema, rows: &[Vec<f64>], prevalence: f64) -> Result<Self> {
        let mut planted = Self::compile(signal, schema)?;
        let scores: Vec<f64> = rows.iter().map(|r| planted.score(r)).collect();
        let mean_risk = |b: f64| scores.iter().map(|&s| sigmoid(b + s)).sum::<f64>() / scores.len().max(1) as f64;
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_risk(mid) < prevalence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        planted.intercept = 0.5 * (lo + hi);
        Ok(planted)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    #[serde(default = "default_prevalence")]
    pub target_prevalence: f64,
    #[serde(default)]
    pub signal: SignalSpec,
}

fn default_prevalence() -> f64 {
    DEFAULT_PREVALENCE
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: REFERENCE_COHORT_SIZE,
            seed: 7,
            target_prevalence: DEFAULT_PREVALENCE,
            signal: SignalSpec::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::InvalidConfig("n_patients must be at least 1".into()));
        }
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target prevalence {} must lie strictly inside (0, 1)",
                self.target_prevalence
            )));
        }
        Ok(())
    }
}

/// Generated cohort plus the planted risk function that produced its outcomes.
#[derive(Clone, Debug)]
pub struct SyntheticCohort<T> {
    pub table: CohortTable<T>,
    pub planted: PlantedRisk,
}

/// Raw feature rows drawn from the latent-factor model (no outcomes).
fn draw_features(schema: &FeatureSchema, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let models: Vec<FeatureModel> = schema.names().map(feature_model).collect();
    let cuts: Vec<f64> = models
        .iter()
        .map(|m| match *m {
            FeatureModel::Binary { rate, .. } => unit.inverse_cdf(1.0 - rate),
            FeatureModel::Continuous { .. } => 0.0,
        })
        .collect();
    (0..n)
        .map(|_| {
            let z: [f64; N_LATENT] = std::array::from_fn(|_| rng.sample(StandardNormal));
            models
                .iter()
                .zip(&cuts)
                .zip(schema.features())
                .map(|((m, &cut), desc)| {
                    let e: f64 = rng.sample(StandardNormal);
                    let (FeatureModel::Continuous { loading, .. } | FeatureModel::Binary { loading, .. }) = *m;
                    let common: f64 = loading.iter().zip(&z).map(|(l, v)| l * v).sum();
                    let l2: f64 = loading.iter().map(|l| l * l).sum();
                    let value = common + (1.0 - l2).max(0.0).sqrt() * e;
                    match (*m, desc.kind) {
                        (FeatureModel::Continuous { center, scale, .. }, FeatureKind::Continuous) => {
                            desc.clamp(center + scale * value)
                        }
                        (FeatureModel::Binary { .. }, _) => {
                            if value > cut {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        (FeatureModel::Continuous { .. }, FeatureKind::Binary) => desc.clamp(value),
                    }
                })
                .collect()
        })
        .collect()
}

/// Generates the cohort and returns it with its planted risk function.
pub fn generate_synthetic<T: Scalar>(config: &GeneratorConfig) -> Result<SyntheticCohort<T>> {
    config.validate()?;
    let schema = FeatureSchema::heart_failure();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = draw_features(&schema, config.n_patients, &mut rng);
    let planted = PlantedRisk::calibrate(&config.signal, &schema, &rows, config.target_prevalence)?;
    let outcomes: Vec<bool> = rows
        .iter()
        .map(|r| rng.random::<f64>() < planted.risk(r))
        .collect();
    let rows = rows
        .into_iter()
        .map(|r| r.into_iter().map(T::lit).collect())
        .collect();
    let table = CohortTable::from_dense(schema, rows, outcomes)?;
    Ok(SyntheticCohort { table, planted })
}

/// Generates a synthetic cohort; a pure function of `config`.
pub fn generate_cohort<T: Scalar>(config: &GeneratorConfig) -> Result<CohortTable<T>> {
    generate_synthetic(config).map(|s| s.table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_size_hits_prevalence_band() {
        let cfg = GeneratorConfig { n_patients: REFERENCE_COHORT_SIZE, seed: 7, ..Default::default() };
        let t: CohortTable<f64> = generate_cohort(&cfg).unwrap();
        assert_eq!(t.len(), 30_389);
        let p = t.prevalence();
        assert!((0.168..=0.208).contains(&p), "prevalence {p}");
    }

    #[test]
    fn single_patient() {
        let cfg = GeneratorConfig { n_patients: 1, ..Default::default() };
        let t: CohortTable<f64> = generate_cohort(&cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.outcomes().len(), 1);
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = GeneratorConfig { n_patients: 500, seed: 11, ..Default::default() };
        let a: CohortTable<f64> = generate_cohort(&cfg).unwrap();
        let b: CohortTable<f64> = generate_cohort(&cfg).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        let other: CohortTable<f64> = generate_cohort(&GeneratorConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn invalid_prevalence_rejected() {
        for p in [0.0, 1.0, -0.1, 1.5] {
            let cfg = GeneratorConfig { n_patients: 10, target_prevalence: p, ..Default::default() };
            assert!(generate_cohort::<f64>(&cfg).is_err());
        }
        let cfg = GeneratorConfig { n_patients: 0, ..Default::default() };
        assert!(generate_cohort::<f64>(&cfg).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let cfg = GeneratorConfig { n_patients: 50, ..Default::default() };
        let t: CohortTable<f32> = generate_cohort(&cfg).unwrap();
        assert!(t.is_complete());
    }

    #[test]
    fn planted_risk_reproduces_calibrated_prevalence() {
        let cfg = GeneratorConfig { n_patients: 5000, seed: 3, ..Default::default() };
        let s: SyntheticCohort<f64> = generate_synthetic(&cfg).unwrap();
        let dense = s.table.dense().unwrap();
        let mean = dense.iter().map(|r| s.planted.risk(r)).sum::<f64>() / dense.len() as f64;
        assert!((mean - DEFAULT_PREVALENCE).abs() < 1e-9);
    }
}
