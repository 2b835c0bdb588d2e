//! Patient scenarios for the case-based part of the survey.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::strata::{stratum_of, StratumLinear};
use super::tree::{StratumTree, TreeNode};
use crate::cohort::{CohortTable, FeatureCategory, FeatureSchema};
use crate::error::{Error, Result};
use crate::model::RiskScorer;
use crate::scalar::Scalar;

/// Risks the four scenarios are chosen to sit near.
pub const TARGET_RISKS: [f64; 4] = [0.15, 0.40, 0.60, 0.85];

pub const N_SENSITIVITY_FEATURES: usize = 2;
pub const SENSITIVITY_GRID_POINTS: usize = 5;

const DISPLAY_NAMES: [&str; 12] = [
    "Ada Brennan",
    "Tomas Okafor",
    "Mirela Sandoval",
    "Henrik Lund",
    "Priya Castellano",
    "Walter Nyberg",
    "June Abernathy",
    "Rafael Idowu",
    "Greta Holloway",
    "Samuel Achterberg",
    "Noor Valentine",
    "Ivo Marchetti",
];

const PORTRAITS: [&str; 8] = [
    "portrait-01",
    "portrait-02",
    "portrait-03",
    "portrait-04",
    "portrait-05",
    "portrait-06",
    "portrait-07",
    "portrait-08",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatientScenario<T> {
    /// Row index in the cohort the patient was drawn from.
    pub patient_id: usize,
    pub display_name: String,
    pub portrait: String,
    pub target_risk: f64,
    pub predicted_risk: T,
    pub stratum: usize,
    pub features: Vec<T>,
    pub died_within_1yr: bool,
}

/// Picks one test-partition patient per target risk: nearest predicted risk,
/// ties to the lowest patient id, no patient used twice.
pub fn select_patient_scenarios<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    cohort: &CohortTable<T>,
    test_indices: &[usize],
    seed: u64,
) -> Result<Vec<PatientScenario<T>>> {
    let mut ids: Vec<usize> = test_indices.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < TARGET_RISKS.len() {
        return Err(Error::InvalidInput(format!(
            "need at least {} test patients, got {}",
            TARGET_RISKS.len(),
            ids.len()
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&i| i >= cohort.len()) {
        return Err(Error::InvalidInput(format!("test index {bad} outside cohort")));
    }
    let rows: Vec<Vec<T>> = ids
        .iter()
        .map(|&i| {
            cohort.rows()[i]
                .iter()
                .map(|c| c.ok_or_else(|| Error::InvalidInput(format!("patient {i} has missing values"))))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let risks = scorer.risk_batch(&rows);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = DISPLAY_NAMES.to_vec();
    names.shuffle(&mut rng);
    let mut portraits = PORTRAITS.to_vec();
    portraits.shuffle(&mut rng);

    let mut used = vec![false; ids.len()];
    let mut out = Vec::with_capacity(TARGET_RISKS.len());
    for (k, &target) in TARGET_RISKS.iter().enumerate() {
        // ids are sorted, so the first minimum is the lowest id
        let mut best: Option<(usize, f64)> = None;
        for (j, r) in risks.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (r.as_f64() - target).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let (j, _) = best.expect("enough unused patients");
        used[j] = true;
        out.push(PatientScenario {
            patient_id: ids[j],
            display_name: names[k].to_owned(),
            portrait: portraits[k].to_owned(),
            target_risk: target,
            predicted_risk: risks[j],
            stratum: stratum_of(risks[j])?,
            features: rows[j].clone(),
            died_within_1yr: cohort.outcomes()[ids[j]],
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SensitivityPoint<T> {
    pub value: T,
    pub risk: T,
    pub is_current: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SensitivityFeature<T> {
    pub feature: usize,
    pub feature_name: String,
    pub current_value: T,
    pub points: Vec<SensitivityPoint<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SensitivityTable<T> {
    pub baseline_risk: T,
    pub features: Vec<SensitivityFeature<T>>,
}

/// Deterministically picks which features get a sensitivity table.
pub fn choose_sensitivity_features(schema: &FeatureSchema, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..schema.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5e75_17u64));
    let mut chosen: Vec<usize> = idx.into_iter().take(N_SENSITIVITY_FEATURES).collect();
    chosen.sort_unstable();
    chosen
}

/// Values a feature is swept over: {0, 1} for binary features, otherwise an
/// evenly spaced grid over the feature range whose interior point closest to
/// `current` is replaced by `current` (unless `current` is already on the grid).
pub fn sensitivity_grid<T: Scalar>(schema: &FeatureSchema, feature: usize, current: T) -> Vec<T> {
    let d = schema.get(feature);
    if d.is_binary() {
        return vec![T::zero(), T::one()];
    }
    let m = SENSITIVITY_GRID_POINTS;
    let mut grid: Vec<T> = (0..m)
        .map(|i| T::lit(d.min + (d.max - d.min) * i as f64 / (m - 1) as f64))
        .collect();
    if grid.contains(&current) {
        return grid;
    }
    let nearest = (1..m - 1)
        .min_by(|&a, &b| {
            let da = (grid[a] - current).abs();
            let db = (grid[b] - current).abs();
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("grid has interior points");
    grid[nearest] = current;
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    grid
}

/// One-at-a-time sweeps of two seed-chosen features, all other values held fixed.
pub fn build_sensitivity<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    schema: &FeatureSchema,
    x: &[T],
    seed: u64,
) -> Result<SensitivityTable<T>> {
    sensitivity_for(scorer, schema, x, &choose_sensitivity_features(schema, seed))
}

/// Sensitivity sweeps over an explicit feature list.
pub fn sensitivity_for<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    schema: &FeatureSchema,
    x: &[T],
    features: &[usize],
) -> Result<SensitivityTable<T>> {
    if x.len() != schema.len() {
        return Err(Error::InvalidInput(format!("expected {} features, got {}", schema.len(), x.len())));
    }
    let baseline_risk = scorer.risk(x);
    let mut out = Vec::with_capacity(features.len());
    for &f in features {
        if f >= schema.len() {
            return Err(Error::InvalidInput(format!("feature index {f} out of range")));
        }
        let mut probe = x.to_vec();
        let points = sensitivity_grid(schema, f, x[f])
            .into_iter()
            .map(|v| {
                let is_current = v == x[f];
                let risk = if is_current {
                    baseline_risk
                } else {
                    probe[f] = v;
                    scorer.risk(&probe)
                };
                SensitivityPoint { value: v, risk, is_current }
            })
            .collect();
        out.push(SensitivityFeature {
            feature: f,
            feature_name: schema.get(f).name.clone(),
            current_value: x[f],
            points,
        });
    }
    Ok(SensitivityTable { baseline_risk, features: out })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatientFeature<T> {
    pub name: String,
    pub value: T,
    pub category: FeatureCategory,
}

/// Demographics, vitals, symptoms and medications as shown on the patient card.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PatientCard<T> {
    pub patient_id: usize,
    pub display_name: String,
    pub portrait: String,
    pub predicted_risk: T,
    pub features: Vec<PatientFeature<T>>,
}

impl<T: Scalar> PatientCard<T> {
    pub fn new(scenario: &PatientScenario<T>, schema: &FeatureSchema) -> Self {
        PatientCard {
            patient_id: scenario.patient_id,
            display_name: scenario.display_name.clone(),
            portrait: scenario.portrait.clone(),
            predicted_risk: scenario.predicted_risk,
            features: schema
                .features()
                .iter()
                .zip(&scenario.features)
                .map(|(d, &v)| PatientFeature { name: d.name.clone(), value: v, category: d.category })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Contribution<T> {
    pub feature: String,
    pub coefficient: T,
    pub value: T,
    pub contribution: T,
    pub significant: bool,
}

/// The linear surrogate of the patient's stratum, evaluated at the patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalLinear<T> {
    pub patient_id: usize,
    pub stratum_index: usize,
    pub intercept: T,
    pub surrogate_risk: T,
    pub contributions: Vec<Contribution<T>>,
}

impl<T: Scalar> LocalLinear<T> {
    pub fn new(scenario: &PatientScenario<T>, strata: &[StratumLinear<T>]) -> Result<Self> {
        let s = strata
            .iter()
            .find(|s| s.stratum_index == scenario.stratum)
            .ok_or(Error::EmptyStratum(scenario.stratum))?;
        let contributions = s
            .coefficients
            .iter()
            .zip(&scenario.features)
            .map(|(c, &v)| Contribution {
                feature: c.feature.clone(),
                coefficient: c.coefficient,
                value: v,
                contribution: c.coefficient * v,
                significant: c.significant,
            })
            .collect();
        Ok(LocalLinear {
            patient_id: scenario.patient_id,
            stratum_index: s.stratum_index,
            intercept: s.intercept,
            surrogate_risk: s.predict(&scenario.features),
            contributions,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PathStep<T> {
    pub feature_name: String,
    pub threshold: T,
    pub value: T,
    pub went_left: bool,
}

/// The tree surrogate of the patient's stratum with the patient's path through it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LocalTree<T> {
    pub patient_id: usize,
    pub stratum_index: usize,
    pub tree: TreeNode<T>,
    pub path: Vec<PathStep<T>>,
    pub leaf_value: T,
}

impl<T: Scalar> LocalTree<T> {
    pub fn new(scenario: &PatientScenario<T>, strata: &[StratumTree<T>]) -> Result<Self> {
        let s = strata
            .iter()
            .find(|s| s.stratum_index == scenario.stratum)
            .ok_or(Error::EmptyStratum(scenario.stratum))?;
        let x = &scenario.features;
        let mut path = Vec::new();
        let mut node = &s.tree;
        let leaf_value = loop {
            match node {
                TreeNode::Leaf { leaf_value, .. } => break *leaf_value,
                TreeNode::Split { feature, feature_name, threshold, left, right, .. } => {
                    let went_left = x[*feature] <= *threshold;
                    path.push(PathStep {
                        feature_name: feature_name.clone(),
                        threshold: *threshold,
                        value: x[*feature],
                        went_left,
                    });
                    node = if went_left { left } else { right };
                }
            }
        };
        Ok(LocalTree { patient_id: scenario.patient_id, stratum_index: s.stratum_index, tree: s.tree.clone(), path, leaf_value })
    }
}

/// What actually happened to the patient, and whether the model called it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OutcomeCard<T> {
    pub patient_id: usize,
    pub died_within_1yr: bool,
    pub predicted_risk: T,
    pub predicted_high_risk: bool,
    pub prediction_accurate: bool,
}

impl<T: Scalar> OutcomeCard<T> {
    pub fn new(scenario: &PatientScenario<T>) -> Self {
        let high = scenario.predicted_risk >= T::lit(0.5);
        OutcomeCard {
            patient_id: scenario.patient_id,
            died_within_1yr: scenario.died_within_1yr,
            predicted_risk: scenario.predicted_risk,
            predicted_high_risk: high,
            prediction_accurate: high == scenario.died_within_1yr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::heart_failure()
    }

    #[test]
    fn grid_keeps_endpoints_and_inserts_current() {
        let s = schema();
        let age = s.index_of("age").unwrap();
        let d = s.get(age);
        let cur = d.min + 0.3 * (d.max - d.min);
        let g = sensitivity_grid::<f64>(&s, age, cur);
        assert_eq!(g.len(), SENSITIVITY_GRID_POINTS);
        assert_eq!(g[0], d.min);
        assert_eq!(*g.last().unwrap(), d.max);
        assert!(g.contains(&cur));
        assert!(g.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn binary_grid() {
        let s = schema();
        let m = s.index_of("male").unwrap();
        assert_eq!(sensitivity_grid::<f64>(&s, m, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn sensitivity_current_point_matches_baseline() {
        let s = schema();
        let x: Vec<f64> = s
            .features()
            .iter()
            .map(|d| if d.is_binary() { 1.0 } else { 0.5 * (d.min + d.max) })
            .collect();
        let scorer = |r: &[f64]| crate::scalar::sigmoid(0.01 * r.iter().sum::<f64>() - 3.0);
        let t = build_sensitivity(&scorer, &s, &x, 9).unwrap();
        assert_eq!(t.features.len(), N_SENSITIVITY_FEATURES);
        assert_eq!(t, build_sensitivity(&scorer, &s, &x, 9).unwrap());
        for f in &t.features {
            let cur: Vec<_> = f.points.iter().filter(|p| p.is_current).collect();
            assert_eq!(cur.len(), 1);
            assert_eq!(cur[0].risk, t.baseline_risk);
        }
    }

    #[test]
    fn scenarios_pick_nearest_distinct_patients() {
        let s = schema();
        let base: Vec<f64> = s.features().iter().map(|d| d.min).collect();
        // encode the desired risk in the age column
        let age = s.index_of("age").unwrap();
        let (lo, hi) = (s.get(age).min, s.get(age).max);
        let risks = [0.15, 0.15, 0.40, 0.60, 0.60, 0.86, 0.05];
        let rows: Vec<Vec<f64>> = risks
            .iter()
            .map(|&r| {
                let mut x = base.clone();
                x[age] = lo + r * (hi - lo);
                x
            })
            .collect();
        let cohort = CohortTable::from_dense(s, rows, vec![false, true, false, true, false, true, false]).unwrap();
        let scorer = move |x: &[f64]| (x[age] - lo) / (hi - lo);
        let all: Vec<usize> = (0..7).collect();
        let sc = select_patient_scenarios(&scorer, &cohort, &all, 1).unwrap();
        let ids: Vec<usize> = sc.iter().map(|p| p.patient_id).collect();
        assert_eq!(ids, vec![0, 2, 3, 5]);
        assert_eq!(sc[3].stratum, 4);
        assert!(OutcomeCard::new(&sc[3]).prediction_accurate);
        let err = select_patient_scenarios(&scorer, &cohort, &all[..3], 1);
        assert!(err.is_err());
    }
}
