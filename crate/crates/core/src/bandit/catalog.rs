use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::EvidenceKind;

/// Survey part: 1 covers the model as a whole, 2 walks through patient cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Part {
    One,
    Two,
}

impl Part {
    pub const ALL: [Part; 2] = [Part::One, Part::Two];

    pub fn number(self) -> u8 {
        match self {
            Part::One => 1,
            Part::Two => 2,
        }
    }

    pub fn admits(self, kind: EvidenceKind) -> bool {
        kind.is_patient_specific() == (self == Part::Two)
    }
}

impl TryFrom<u8> for Part {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Part::One),
            2 => Ok(Part::Two),
            _ => Err(Error::Parse(format!("part must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Part> for u8 {
    fn from(p: Part) -> u8 {
        p.number()
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let n: u8 = s.trim().parse().map_err(|_| Error::Parse(format!("bad part `{s}`")))?;
        Part::try_from(n)
    }
}

/// Audience whose trust is being measured. Each role gets its own bandits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Clinician,
    MlExpert,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Clinician, Role::MlExpert];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Clinician => "clinician",
            Role::MlExpert => "ml_expert",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown role `{s}`")))
    }
}

/// Single-letter arm label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArmId(char);

impl ArmId {
    pub fn new(c: char) -> Result<Self> {
        if c.is_ascii_uppercase() {
            Ok(ArmId(c))
        } else {
            Err(Error::UnknownArm(c.to_string()))
        }
    }

    pub fn letter(self) -> char {
        self.0
    }
}

impl TryFrom<String> for ArmId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ArmId> for String {
    fn from(a: ArmId) -> String {
        a.0.to_string()
    }
}

impl FromStr for ArmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => ArmId::new(c),
            _ => Err(Error::UnknownArm(s.to_owned())),
        }
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arm {
    pub id: ArmId,
    pub kinds: Vec<EvidenceKind>,
}

/// Ordered arms for one survey part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCatalog {
    pub part: Part,
    pub arms: Vec<Arm>,
}

impl ArmCatalog {
    /// Validates a catalog: non-empty, unique ids, non-empty arms of the part's kinds.
    pub fn new(part: Part, arms: Vec<Arm>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        for (i, a) in arms.iter().enumerate() {
            if arms[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidConfig(format!("duplicate arm {}", a.id)));
            }
            if a.kinds.is_empty() {
                return Err(Error::InvalidConfig(format!("arm {} has no evidence", a.id)));
            }
            if let Some(k) = a.kinds.iter().find(|k| !part.admits(**k)) {
                return Err(Error::InvalidConfig(format!("arm {} shows {k} in part {part}", a.id)));
            }
        }
        Ok(ArmCatalog { part, arms })
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn index_of(&self, id: ArmId) -> Result<usize> {
        self.arms
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| Error::UnknownArm(id.to_string()))
    }

    pub fn arm(&self, id: ArmId) -> Result<&Arm> {
        Ok(&self.arms[self.index_of(id)?])
    }
}

fn catalog(part: Part, rows: &[(char, &[EvidenceKind])]) -> ArmCatalog {
    let arms = rows
        .iter()
        .map(|&(c, kinds)| Arm { id: ArmId(c), kinds: kinds.to_vec() })
        .collect();
    ArmCatalog::new(part, arms).expect("built-in catalog is valid")
}

/// The evidence sequences tested in each part, in presentation order.
pub fn build_catalogs() -> (ArmCatalog, ArmCatalog) {
    use EvidenceKind::*;
    let part1 = catalog(
        Part::One,
        &[
            ('A', &[Data, Accuracy]),
            ('B', &[Data, Accuracy, StratifiedTree]),
            ('C', &[Data, Accuracy, StratifiedLinear]),
            ('D', &[Data, Accuracy, StratifiedLinear, StratifiedTree]),
            ('E', &[Data, Methodology, Accuracy]),
            ('F', &[Data, Methodology, Accuracy, StratifiedTree]),
            ('G', &[Data, Methodology, Accuracy, StratifiedLinear]),
            ('H', &[Data, Methodology, Accuracy, StratifiedLinear, StratifiedTree]),
        ],
    );
    let part2 = catalog(
        Part::Two,
        &[
            ('A', &[PatientInfo]),
            ('B', &[PatientInfo, Sensitivity]),
            ('C', &[PatientInfo, Sensitivity, Outcome]),
            ('D', &[PatientInfo, Sensitivity, LocalLinear, Outcome]),
            ('E', &[PatientInfo, Sensitivity, LocalTree, Outcome]),
            ('F', &[PatientInfo, Sensitivity, LocalLinear, LocalTree, Outcome]),
        ],
    );
    (part1, part2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let (p1, p2) = build_catalogs();
        assert_eq!(p1.len(), 8);
        assert_eq!(p2.len(), 6);
        assert!(p1.arms.iter().all(|a| a.kinds.contains(&EvidenceKind::Data) && a.kinds.contains(&EvidenceKind::Accuracy)));
        assert!(p2.arms.iter().all(|a| a.kinds[0] == EvidenceKind::PatientInfo));
    }

    #[test]
    fn invalid_catalogs_rejected() {
        assert!(matches!(ArmCatalog::new(Part::One, vec![]), Err(Error::EmptyCatalog)));
        let a = Arm { id: ArmId::new('A').unwrap(), kinds: vec![EvidenceKind::Outcome] };
        assert!(ArmCatalog::new(Part::One, vec![a.clone()]).is_err());
        assert!(ArmCatalog::new(Part::Two, vec![a.clone(), a]).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!("clinician".parse::<Role>().unwrap(), Role::Clinician);
        assert!("nurse".parse::<Role>().is_err());
        assert_eq!("2".parse::<Part>().unwrap(), Part::Two);
        assert!("3".parse::<Part>().is_err());
        assert_eq!(serde_json::to_string(&Part::One).unwrap(), "1");
        assert_eq!(serde_json::to_string(&ArmId::new('H').unwrap()).unwrap(), "\"H\"");
        assert!("AB".parse::<ArmId>().is_err());
    }
}
