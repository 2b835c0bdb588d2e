use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of features recorded per patient.
pub const N_FEATURES: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    Demographics,
    VitalsCharacteristics,
    Symptom,
    Medication,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    pub min: f64,
    pub max: f64,
    pub category: FeatureCategory,
}

impl FeatureDescriptor {
    pub fn continuous(name: &str, min: f64, max: f64, category: FeatureCategory) -> Self {
        FeatureDescriptor {
            name: name.to_owned(),
            kind: FeatureKind::Continuous,
            min,
            max,
            category,
        }
    }

    pub fn binary(name: &str, category: FeatureCategory) -> Self {
        FeatureDescriptor {
            name: name.to_owned(),
            kind: FeatureKind::Binary,
            min: 0.0,
            max: 1.0,
            category,
        }
    }

    pub fn is_binary(&self) -> bool {
        self.kind == FeatureKind::Binary
    }

    /// Whether an observed value is admissible for this feature.
    pub fn admits(&self, v: f64) -> bool {
        match self.kind {
            FeatureKind::Binary => v == 0.0 || v == 1.0,
            FeatureKind::Continuous => v.is_finite() && v >= self.min && v <= self.max,
        }
    }

    /// Clamps into the admissible range; binary values snap at 0.5.
    pub fn clamp(&self, v: f64) -> f64 {
        match self.kind {
            FeatureKind::Binary => {
                if v >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            FeatureKind::Continuous => v.clamp(self.min, self.max),
        }
    }
}

/// Ordered list of the 31 feature descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        if features.len() != N_FEATURES {
            return Err(Error::InvalidConfig(format!(
                "schema must list exactly {N_FEATURES} features, got {}",
                features.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate feature `{}`", f.name)));
            }
            if f.name.is_empty() || f.name == super::OUTCOME_COLUMN {
                return Err(Error::InvalidConfig(format!("invalid feature name `{}`", f.name)));
            }
            if f.kind == FeatureKind::Continuous
                && !(f.min.is_finite() && f.max.is_finite() && f.min < f.max)
            {
                return Err(Error::InvalidConfig(format!(
                    "feature `{}` needs finite min < max",
                    f.name
                )));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// Heart-failure cohort layout: demographics, vitals and characteristics,
    /// symptoms, and prescribed medications.
    pub fn heart_failure() -> Self {
        use FeatureCategory::*;
        let c = FeatureDescriptor::continuous;
        let b = FeatureDescriptor::binary;
        let features = vec![
            c("age", 20.0, 100.0, Demographics),
            b("male", Demographics),
            c("bmi", 15.0, 50.0, Demographics),
            b("current_smoker", Demographics),
            c("systolic_bp", 70.0, 220.0, VitalsCharacteristics),
            c("diastolic_bp", 40.0, 130.0, VitalsCharacteristics),
            c("heart_rate", 40.0, 160.0, VitalsCharacteristics),
            c("ejection_fraction", 10.0, 80.0, VitalsCharacteristics),
            c("creatinine", 0.4, 6.0, VitalsCharacteristics),
            c("sodium", 120.0, 150.0, VitalsCharacteristics),
            c("hemoglobin", 7.0, 18.0, VitalsCharacteristics),
            c("potassium", 2.5, 6.5, VitalsCharacteristics),
            c("nyha_class", 1.0, 4.0, VitalsCharacteristics),
            c("hf_duration_years", 0.0, 30.0, VitalsCharacteristics),
            b("diabetes", VitalsCharacteristics),
            b("copd", VitalsCharacteristics),
            b("hypertension", VitalsCharacteristics),
            b("atrial_fibrillation", VitalsCharacteristics),
            b("prior_mi", VitalsCharacteristics),
            b("dyspnea_at_rest", Symptom),
            b("orthopnea", Symptom),
            b("peripheral_edema", Symptom),
            b("fatigue", Symptom),
            b("beta_blocker", Medication),
            b("ace_inhibitor", Medication),
            b("arb", Medication),
            b("loop_diuretic", Medication),
            b("spironolactone", Medication),
            b("digoxin", Medication),
            b("statin", Medication),
            b("anticoagulant", Medication),
        ];
        FeatureSchema::new(features).expect("built-in schema is valid")
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, index: usize) -> &FeatureDescriptor {
        &self.features[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FeatureSchema = serde_json::from_str(text)?;
        FeatureSchema::new(raw.features)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
