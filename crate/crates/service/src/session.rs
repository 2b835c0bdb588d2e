//! Per-session step plan and state machine. Pure: no I/O, no clock.

use serde::{Deserialize, Serialize};

use trustloop::bandit::{check_rating, normalize_mean_rating, normalize_rating, Arm, ArmId, Part, Role};
use trustloop::evidence::EvidenceKind;
use trustloop::rater::PATIENTS_PER_SESSION;
use trustloop::report::{RatingKind, ResponseRow};

use crate::error::ServiceError;

/// What the client must send back to leave a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Usefulness,
    Confidence,
    /// Acknowledgement only.
    None,
}

impl Expect {
    pub fn rating_kind(self) -> Option<RatingKind> {
        match self {
            Expect::Usefulness => Some(RatingKind::Usefulness),
            Expect::Confidence => Some(RatingKind::Confidence),
            Expect::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepType {
    Evidence,
    Confidence,
    Transition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedStep {
    pub part: Part,
    pub step_type: StepType,
    pub kind: Option<EvidenceKind>,
    pub patient_index: Option<usize>,
    pub expects: Expect,
    /// Position within the part, from 0.
    pub index_in_part: usize,
}

/// Part 1: each item rated for usefulness, then one sequence confidence rating.
/// A transition screen. Part 2: per patient, each item acknowledged, then a
/// confidence rating for that patient.
pub fn plan(part1: &Arm, part2: &Arm) -> Vec<PlannedStep> {
    let mut steps = Vec::new();
    let push = |part, step_type, kind, patient_index, expects, steps: &mut Vec<PlannedStep>| {
        let index_in_part = steps.iter().filter(|s: &&PlannedStep| s.part == part).count();
        steps.push(PlannedStep { part, step_type, kind, patient_index, expects, index_in_part });
    };
    for &k in &part1.kinds {
        push(Part::One, StepType::Evidence, Some(k), None, Expect::Usefulness, &mut steps);
    }
    push(Part::One, StepType::Confidence, None, None, Expect::Confidence, &mut steps);
    push(Part::Two, StepType::Transition, None, None, Expect::None, &mut steps);
    for p in 0..PATIENTS_PER_SESSION {
        for &k in &part2.kinds {
            push(Part::Two, StepType::Evidence, Some(k), Some(p), Expect::None, &mut steps);
        }
        push(Part::Two, StepType::Confidence, None, Some(p), Expect::Confidence, &mut steps);
    }
    steps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    InProgress,
    Complete,
    Abandoned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub role: Role,
    pub part1_arm: ArmId,
    pub part2_arm: ArmId,
    /// Index of the next unanswered step.
    pub cursor: usize,
    pub status: SessionStatus,
    pub started_at: String,
    pub updated_at: String,
    pub usefulness: Vec<(EvidenceKind, i64)>,
    pub part1_confidence: Option<i64>,
    pub patient_confidence: Vec<Option<i64>>,
    #[serde(skip)]
    pub(crate) steps: Vec<PlannedStep>,
}

/// Side effects of an accepted answer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub response: Option<ResponseRow>,
    /// Reward earned by the part's arm, if this answer completed a part.
    pub pull: Option<(Part, f64)>,
    pub completed: bool,
}

impl SessionRecord {
    pub fn new(session_id: String, role: Role, part1: &Arm, part2: &Arm, now: String) -> Self {
        SessionRecord {
            session_id,
            role,
            part1_arm: part1.id,
            part2_arm: part2.id,
            cursor: 0,
            status: SessionStatus::InProgress,
            started_at: now.clone(),
            updated_at: now,
            usefulness: Vec::new(),
            part1_confidence: None,
            patient_confidence: vec![None; PATIENTS_PER_SESSION],
            steps: plan(part1, part2),
        }
    }

    pub fn steps(&self) -> &[PlannedStep] {
        &self.steps
    }

    pub fn current(&self) -> Option<&PlannedStep> {
        self.steps.get(self.cursor)
    }

    fn arm(&self, part: Part) -> ArmId {
        match part {
            Part::One => self.part1_arm,
            Part::Two => self.part2_arm,
        }
    }

    /// Validates and applies one answer. Nothing changes on error.
    pub fn answer(&mut self, step_ref: usize, kind: Expect, rating: Option<i64>, now: &str) -> Result<Outcome, ServiceError> {
        match self.status {
            SessionStatus::InProgress => {}
            SessionStatus::Complete => return Err(ServiceError::SessionComplete(self.session_id.clone())),
            SessionStatus::Abandoned => return Err(ServiceError::SessionAbandoned(self.session_id.clone())),
        }
        if step_ref < self.cursor {
            return Err(ServiceError::Duplicate { step_ref });
        }
        if step_ref > self.cursor {
            return Err(ServiceError::StepMismatch { expected: self.cursor, got: step_ref });
        }
        let step = self.steps[self.cursor];
        if kind != step.expects {
            return Err(ServiceError::WrongKind { expected: step.expects, got: kind });
        }
        let rating = match (step.expects, rating) {
            (Expect::None, None) => None,
            (Expect::None, Some(_)) => return Err(ServiceError::Invalid("this step takes no rating".into())),
            (_, None) => return Err(ServiceError::Invalid("rating is required".into())),
            (_, Some(r)) => {
                check_rating(r).map_err(ServiceError::from)?;
                Some(r)
            }
        };

        let mut out = Outcome::default();
        if let Some(r) = rating {
            out.response = Some(ResponseRow {
                timestamp: now.to_owned(),
                session_id: self.session_id.clone(),
                role: self.role,
                part: step.part,
                arm: self.arm(step.part),
                rating_kind: step.expects.rating_kind().expect("rated step"),
                evidence_kind: step.kind,
                patient_index: step.patient_index,
                rating: r,
                reward: normalize_rating::<f64>(r)?.value(),
            });
            match (step.expects, step.part, step.patient_index, step.kind) {
                (Expect::Usefulness, _, _, Some(k)) => self.usefulness.push((k, r)),
                (Expect::Confidence, Part::One, _, _) => {
                    self.part1_confidence = Some(r);
                    out.pull = Some((Part::One, normalize_rating::<f64>(r)?.value()));
                }
                (Expect::Confidence, Part::Two, Some(p), _) => {
                    self.patient_confidence[p] = Some(r);
                    if self.patient_confidence.iter().all(Option::is_some) {
                        let all: Vec<i64> = self.patient_confidence.iter().flatten().copied().collect();
                        out.pull = Some((Part::Two, normalize_mean_rating::<f64>(&all)?.value()));
                    }
                }
                _ => unreachable!("plan only produces the cases above"),
            }
        }
        self.cursor += 1;
        self.updated_at = now.to_owned();
        if self.cursor == self.steps.len() {
            self.status = SessionStatus::Complete;
            out.completed = true;
        }
        Ok(out)
    }

    pub fn abandon(&mut self, now: &str) {
        if self.status == SessionStatus::InProgress {
            self.status = SessionStatus::Abandoned;
            self.updated_at = now.to_owned();
        }
    }

    /// Ratings the session's arms require: usefulness per part-1 item, one
    /// sequence confidence, one confidence per patient.
    pub fn required_ratings(&self) -> usize {
        self.steps.iter().filter(|s| s.expects != Expect::None).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trustloop::bandit::build_catalogs;

    fn session(a1: usize, a2: usize) -> SessionRecord {
        let (p1, p2) = build_catalogs();
        SessionRecord::new("s".into(), Role::Clinician, &p1.arms[a1], &p2.arms[a2], "t0".into())
    }

    #[test]
    fn arm_h_part_one_order() {
        let s = session(7, 0);
        let kinds: Vec<_> = s.steps().iter().take_while(|st| st.step_type == StepType::Evidence).map(|st| st.kind.unwrap()).collect();
        use EvidenceKind::*;
        assert_eq!(kinds, vec![Data, Methodology, Accuracy, StratifiedLinear, StratifiedTree]);
    }

    #[test]
    fn arm_c_patient_walk() {
        let s = session(0, 2);
        let first: Vec<_> = s
            .steps()
            .iter()
            .filter(|st| st.patient_index == Some(0) && st.step_type == StepType::Evidence)
            .map(|st| st.kind.unwrap())
            .collect();
        assert_eq!(first, vec![EvidenceKind::PatientInfo, EvidenceKind::Sensitivity, EvidenceKind::Outcome]);
        // 2 usefulness + 1 confidence + transition + 4 × (3 + 1)
        assert_eq!(s.steps().len(), 3 + 1 + 16);
        assert_eq!(s.required_ratings(), 3 + 4);
    }

    #[test]
    fn full_walk_yields_two_pulls() {
        let mut s = session(0, 0);
        let mut pulls = Vec::new();
        let mut responses = 0;
        let patient_ratings = [3, 3, 4, 4];
        while let Some(st) = s.current().copied() {
            let r = match (st.expects, st.patient_index) {
                (Expect::None, _) => None,
                (Expect::Confidence, Some(p)) => Some(patient_ratings[p]),
                (Expect::Confidence, None) => Some(4),
                (Expect::Usefulness, _) => Some(2),
            };
            let out = s.answer(s.cursor, st.expects, r, "t").unwrap();
            responses += usize::from(out.response.is_some());
            pulls.extend(out.pull);
        }
        assert_eq!(pulls, vec![(Part::One, 0.75), (Part::Two, 0.625)]);
        assert_eq!(responses, s.required_ratings());
        assert_eq!(s.status, SessionStatus::Complete);
        assert!(matches!(s.answer(0, Expect::Usefulness, Some(3), "t"), Err(ServiceError::SessionComplete(_))));
    }

    #[test]
    fn rejects_bad_answers_without_change() {
        let mut s = session(0, 0);
        let before = s.clone();
        assert!(matches!(s.answer(0, Expect::Usefulness, Some(6), "t"), Err(ServiceError::Rating(6))));
        assert!(matches!(s.answer(0, Expect::Confidence, Some(3), "t"), Err(ServiceError::WrongKind { .. })));
        assert!(matches!(s.answer(1, Expect::Usefulness, Some(3), "t"), Err(ServiceError::StepMismatch { .. })));
        assert!(s.answer(0, Expect::Usefulness, None, "t").is_err());
        assert_eq!(s, before);
        s.answer(0, Expect::Usefulness, Some(3), "t").unwrap();
        assert!(matches!(s.answer(0, Expect::Usefulness, Some(3), "t"), Err(ServiceError::Duplicate { step_ref: 0 })));
        s.abandon("t2");
        assert!(matches!(s.answer(1, Expect::Usefulness, Some(3), "t"), Err(ServiceError::SessionAbandoned(_))));
    }
}
