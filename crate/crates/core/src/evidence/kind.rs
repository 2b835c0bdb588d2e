use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One presentable unit of model evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Data,
    Methodology,
    Accuracy,
    StratifiedLinear,
    StratifiedTree,
    PatientInfo,
    Sensitivity,
    LocalLinear,
    LocalTree,
    Outcome,
}

impl EvidenceKind {
    pub const ALL: [EvidenceKind; 10] = [
        EvidenceKind::Data,
        EvidenceKind::Methodology,
        EvidenceKind::Accuracy,
        EvidenceKind::StratifiedLinear,
        EvidenceKind::StratifiedTree,
        EvidenceKind::PatientInfo,
        EvidenceKind::Sensitivity,
        EvidenceKind::LocalLinear,
        EvidenceKind::LocalTree,
        EvidenceKind::Outcome,
    ];

    /// Kinds shown once per patient scenario (the second survey part).
    pub fn is_patient_specific(self) -> bool {
        matches!(
            self,
            EvidenceKind::PatientInfo
                | EvidenceKind::Sensitivity
                | EvidenceKind::LocalLinear
                | EvidenceKind::LocalTree
                | EvidenceKind::Outcome
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceKind::Data => "data",
            EvidenceKind::Methodology => "methodology",
            EvidenceKind::Accuracy => "accuracy",
            EvidenceKind::StratifiedLinear => "stratified_linear",
            EvidenceKind::StratifiedTree => "stratified_tree",
            EvidenceKind::PatientInfo => "patient_info",
            EvidenceKind::Sensitivity => "sensitivity",
            EvidenceKind::LocalLinear => "local_linear",
            EvidenceKind::LocalTree => "local_tree",
            EvidenceKind::Outcome => "outcome",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            EvidenceKind::Data => "Data",
            EvidenceKind::Methodology => "Model Training and Implementation",
            EvidenceKind::Accuracy => "Model Accuracy",
            EvidenceKind::StratifiedLinear => "Linear Approximation Coefficients per Risk Quintile",
            EvidenceKind::StratifiedTree => "Decision-Tree Approximations per Risk Quintile",
            EvidenceKind::PatientInfo => "Patient Information",
            EvidenceKind::Sensitivity => "Feature Sensitivity",
            EvidenceKind::LocalLinear => "Local Linear Model Coefficients",
            EvidenceKind::LocalTree => "Local Decision-Tree Diagram",
            EvidenceKind::Outcome => "Patient Outcome",
        }
    }
}

impl fmt::Display for EvidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvidenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EvidenceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown evidence kind `{s}`")))
    }
}
