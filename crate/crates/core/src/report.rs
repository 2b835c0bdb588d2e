//! Response table and the aggregate report derived from it.
//!
//! Every report number is computed from [`ResponseRow`]s alone, so a report
//! rebuilt from an exported CSV matches the live one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bandit::{normalize_mean_rating, normalize_rating, ArmCatalog, ArmId, BanditState, Part, Reward, Role};
use crate::error::{Error, Result};
use crate::evidence::EvidenceKind;
use crate::rater::PATIENTS_PER_SESSION;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// z-value for the two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingKind {
    /// How useful a single piece of evidence was.
    Usefulness,
    /// Confidence in the model after a sequence or a patient case.
    Confidence,
}

/// One submitted rating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub timestamp: String,
    pub session_id: String,
    pub role: Role,
    pub part: Part,
    pub arm: ArmId,
    pub rating_kind: RatingKind,
    pub evidence_kind: Option<EvidenceKind>,
    pub patient_index: Option<usize>,
    pub rating: i64,
    pub reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    pub role: Option<Role>,
    pub part: Option<Part>,
}

impl ExportFilter {
    pub fn admits(&self, role: Role, part: Part) -> bool {
        self.role.is_none_or(|r| r == role) && self.part.is_none_or(|p| p == part)
    }
}

pub const EXPORT_HEADER: [&str; 10] = [
    "timestamp",
    "session_id",
    "role",
    "part",
    "arm",
    "rating_kind",
    "evidence_kind",
    "patient_index",
    "rating",
    "reward",
];

pub fn write_export<W: Write>(rows: &[ResponseRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(EXPORT_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(rows: &[ResponseRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_export(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_export<R: Read>(input: R) -> Result<Vec<ResponseRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header != EXPORT_HEADER {
        return Err(Error::Parse(format!("unexpected export header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Mean with a normal-approximation 95% interval whose displayed bounds are capped to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub n: usize,
    pub mean: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Interval { n, mean: 0.0, half_width: 0.0, lower: 0.0, upper: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self::with_half_width(n, mean, Z_95 * sd / (n as f64).sqrt())
    }

    pub fn with_half_width(n: usize, mean: f64, half_width: f64) -> Self {
        Interval {
            n,
            mean,
            half_width,
            lower: (mean - half_width).clamp(0.0, 1.0),
            upper: (mean + half_width).clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRow {
    pub part: Part,
    pub role: Role,
    pub arm: ArmId,
    pub pulls: u64,
    pub mean: f64,
    /// `None` until the arm has been pulled.
    pub upper_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub role: Role,
    pub kind: EvidenceKind,
    pub usefulness: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRow {
    pub role: Role,
    pub patient_index: usize,
    pub confidence: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub schema_version: u32,
    pub n_responses: usize,
    pub n_sessions: usize,
    pub arms: Vec<ArmRow>,
    pub evidence: Vec<EvidenceRow>,
    pub patients: Vec<PatientRow>,
}

/// Credited pulls implied by the responses, in the order they were earned.
/// Part 1 earns a pull at the sequence confidence rating; part 2 once all
/// patient confidences of the session are in.
pub fn pulls_from_responses(rows: &[ResponseRow]) -> Result<Vec<(Part, Role, ArmId, String, f64)>> {
    let mut pulls = Vec::new();
    let mut patients: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    for r in rows {
        match (r.part, r.rating_kind) {
            (Part::One, RatingKind::Confidence) => {
                pulls.push((r.part, r.role, r.arm, r.session_id.clone(), normalize_rating::<f64>(r.rating)?.value()));
            }
            (Part::Two, RatingKind::Confidence) => {
                let got = patients.entry(&r.session_id).or_default();
                got.push(r.rating);
                if got.len() == PATIENTS_PER_SESSION {
                    let reward = normalize_mean_rating::<f64>(got)?.value();
                    pulls.push((r.part, r.role, r.arm, r.session_id.clone(), reward));
                }
            }
            _ => {}
        }
    }
    Ok(pulls)
}

impl ArmReport {
    pub fn from_responses(rows: &[ResponseRow], part1: &ArmCatalog, part2: &ArmCatalog) -> Result<Self> {
        Self::filtered(rows, part1, part2, &ExportFilter::default())
    }

    pub fn filtered(rows: &[ResponseRow], part1: &ArmCatalog, part2: &ArmCatalog, filter: &ExportFilter) -> Result<Self> {
        let rows: Vec<ResponseRow> = rows.iter().filter(|r| filter.admits(r.role, r.part)).cloned().collect();
        let catalog = |p: Part| if p == Part::One { part1 } else { part2 };

        let mut states: BTreeMap<(Part, Role), BanditState<f64>> = BTreeMap::new();
        for (part, role, arm, _, reward) in pulls_from_responses(&rows)? {
            let idx = catalog(part).index_of(arm)?;
            states
                .entry((part, role))
                .or_insert_with(|| BanditState::new(catalog(part).len()))
                .record_reward(idx, Reward::new(reward)?)?;
        }
        let mut arms = Vec::new();
        for part in Part::ALL {
            for role in Role::ALL {
                if !filter.admits(role, part) {
                    continue;
                }
                let st = states.remove(&(part, role)).unwrap_or_else(|| BanditState::new(catalog(part).len()));
                for (a, b) in catalog(part).arms.iter().zip(st.ucb_bounds()) {
                    arms.push(ArmRow { part, role, arm: a.id, pulls: b.pulls, mean: b.mean, upper_bound: b.upper });
                }
            }
        }

        let mut useful: BTreeMap<(Role, EvidenceKind), Vec<f64>> = BTreeMap::new();
        let mut conf: BTreeMap<(Role, usize), Vec<f64>> = BTreeMap::new();
        for r in &rows {
            let v = normalize_rating::<f64>(r.rating)?.value();
            match (r.rating_kind, r.evidence_kind, r.patient_index) {
                (RatingKind::Usefulness, Some(k), _) => useful.entry((r.role, k)).or_default().push(v),
                (RatingKind::Confidence, _, Some(p)) if r.part == Part::Two => {
                    conf.entry((r.role, p)).or_default().push(v)
                }
                _ => {}
            }
        }
        let evidence = useful
            .into_iter()
            .map(|((role, kind), v)| EvidenceRow { role, kind, usefulness: Interval::from_values(&v) })
            .collect();
        let patients = conf
            .into_iter()
            .map(|((role, patient_index), v)| PatientRow { role, patient_index, confidence: Interval::from_values(&v) })
            .collect();
        let mut sessions: Vec<&str> = rows.iter().map(|r| r.session_id.as_str()).collect();
        sessions.sort_unstable();
        sessions.dedup();
        Ok(ArmReport {
            schema_version: REPORT_SCHEMA_VERSION,
            n_responses: rows.len(),
            n_sessions: sessions.len(),
            arms,
            evidence,
            patients,
        })
    }

    pub fn arm(&self, part: Part, role: Role, arm: ArmId) -> Option<&ArmRow> {
        self.arms.iter().find(|r| r.part == part && r.role == role && r.arm == arm)
    }

    /// One CSV with a `section` column: `arm`, `evidence` or `patient`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,part,role,arm,kind,patient_index,n,mean,upper_bound,ci_lower,ci_upper\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.arms {
            let _ = writeln!(out, "arm,{},{},{},,,{},{},{},,", r.part, r.role, r.arm, r.pulls, r.mean, opt(r.upper_bound));
        }
        for r in &self.evidence {
            let i = &r.usefulness;
            let _ = writeln!(out, "evidence,,{},,{},,{},{},,{},{}", r.role, r.kind, i.n, i.mean, i.lower, i.upper);
        }
        for r in &self.patients {
            let i = &r.confidence;
            let _ = writeln!(out, "patient,2,{},,,{},{},{},,{},{}", r.role, r.patient_index, i.n, i.mean, i.lower, i.upper);
        }
        out
    }

    /// Roles side by side per bar, ready for grouped bar charts.
    pub fn plot_data(&self) -> PlotData {
        let pair = |f: &dyn Fn(Role) -> Option<Bar>| RoleBars { clinician: f(Role::Clinician), ml_expert: f(Role::MlExpert) };
        let mut arms = BTreeMap::new();
        for part in Part::ALL {
            let mut ids: Vec<ArmId> = self.arms.iter().filter(|r| r.part == part).map(|r| r.arm).collect();
            ids.dedup();
            let bars = ids
                .into_iter()
                .map(|id| {
                    let bars = pair(&|role| {
                        self.arm(part, role, id).map(|r| Bar {
                            n: r.pulls as usize,
                            mean: r.mean,
                            lower: r.mean,
                            upper: r.upper_bound.unwrap_or(r.mean),
                        })
                    });
                    (id.to_string(), bars)
                })
                .collect::<Vec<_>>();
            if !bars.is_empty() {
                arms.insert(part.number().to_string(), bars);
            }
        }
        let mut kinds: Vec<EvidenceKind> = self.evidence.iter().map(|r| r.kind).collect();
        kinds.sort_unstable();
        kinds.dedup();
        let evidence = kinds
            .into_iter()
            .map(|k| {
                let bars = pair(&|role| {
                    self.evidence.iter().find(|r| r.role == role && r.kind == k).map(|r| Bar::from(&r.usefulness))
                });
                (k.to_string(), bars)
            })
            .collect();
        let mut idx: Vec<usize> = self.patients.iter().map(|r| r.patient_index).collect();
        idx.sort_unstable();
        idx.dedup();
        let patients = idx
            .into_iter()
            .map(|p| {
                let bars = pair(&|role| {
                    self.patients.iter().find(|r| r.role == role && r.patient_index == p).map(|r| Bar::from(&r.confidence))
                });
                (p.to_string(), bars)
            })
            .collect();
        PlotData { schema_version: REPORT_SCHEMA_VERSION, arms, evidence, patients }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub n: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl From<&Interval> for Bar {
    fn from(i: &Interval) -> Self {
        Bar { n: i.n, mean: i.mean, lower: i.lower, upper: i.upper }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleBars {
    pub clinician: Option<Bar>,
    pub ml_expert: Option<Bar>,
}

/// Grouped-bar data: arm confidence per part (error bar up to the UCB bound),
/// usefulness per evidence kind, confidence per patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub schema_version: u32,
    pub arms: BTreeMap<String, Vec<(String, RoleBars)>>,
    pub evidence: Vec<(String, RoleBars)>,
    pub patients: Vec<(String, RoleBars)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::build_catalogs;

    fn row(session: &str, part: Part, kind: RatingKind, ev: Option<EvidenceKind>, patient: Option<usize>, rating: i64) -> ResponseRow {
        ResponseRow {
            timestamp: "2026-03-01T10:00:00Z".into(),
            session_id: session.into(),
            role: Role::Clinician,
            part,
            arm: ArmId::new('A').unwrap(),
            rating_kind: kind,
            evidence_kind: ev,
            patient_index: patient,
            rating,
            reward: (rating - 1) as f64 / 4.0,
        }
    }

    #[test]
    fn capped_interval() {
        let i = Interval::with_half_width(10, 0.95, 0.2);
        assert_eq!(i.upper, 1.0);
        assert!((i.lower - 0.75).abs() < 1e-12);
        let lo = Interval::with_half_width(10, 0.05, 0.2);
        assert_eq!(lo.lower, 0.0);
    }

    #[test]
    fn single_pull_row() {
        let (p1, p2) = build_catalogs();
        let rows = vec![row("s1", Part::One, RatingKind::Confidence, None, None, 4)];
        let rep = ArmReport::from_responses(&rows, &p1, &p2).unwrap();
        let a = rep.arm(Part::One, Role::Clinician, ArmId::new('A').unwrap()).unwrap();
        assert_eq!((a.pulls, a.mean), (1, 0.75));
        assert_eq!(rep.arms.len(), 2 * (8 + 6));
    }

    #[test]
    fn part_two_needs_all_patients() {
        let (p1, p2) = build_catalogs();
        let mut rows: Vec<ResponseRow> =
            [3, 3, 4].iter().enumerate().map(|(i, &r)| row("s", Part::Two, RatingKind::Confidence, None, Some(i), r)).collect();
        assert!(pulls_from_responses(&rows).unwrap().is_empty());
        rows.push(row("s", Part::Two, RatingKind::Confidence, None, Some(3), 4));
        let pulls = pulls_from_responses(&rows).unwrap();
        assert_eq!(pulls.len(), 1);
        assert_eq!(pulls[0].4, 0.625);
        let rep = ArmReport::from_responses(&rows, &p1, &p2).unwrap();
        assert_eq!(rep.patients.len(), 4);
    }

    #[test]
    fn export_round_trip_and_empty_header() {
        let rows = vec![
            row("s1", Part::One, RatingKind::Usefulness, Some(EvidenceKind::Data), None, 5),
            row("s1", Part::Two, RatingKind::Confidence, None, Some(2), 1),
        ];
        let text = export_csv(&rows).unwrap();
        assert_eq!(read_export(text.as_bytes()).unwrap(), rows);
        let empty = export_csv(&[]).unwrap();
        assert_eq!(empty.trim(), EXPORT_HEADER.join(","));
        assert!(read_export(empty.as_bytes()).unwrap().is_empty());
    }
}
