use std::ops::Range;

use serde::{Deserialize, Serialize};

use trustloop::bandit::{ArmCatalog, ArmId, Part, Role};
use trustloop::rater::{true_means, PopulationSpec, RaterProfile};
use trustloop::report::{ArmReport, ExportFilter};

use crate::client::SurveyApi;
use crate::error::ServiceError;
use crate::service::{PayloadType, Submission};
use crate::session::Expect;

pub const SIM_TRACE_HEADER: &str = "pull_index,part,role,arm,reward,cumulative_regret";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimPull {
    pub pull_index: usize,
    pub session_index: usize,
    pub part: Part,
    pub role: Role,
    pub arm: ArmId,
    pub reward: f64,
    /// Sum over pulls so far of the rater's best true arm mean minus the chosen arm's.
    pub cumulative_regret: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub pulls: Vec<SimPull>,
}

impl SimulationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SIM_TRACE_HEADER);
        out.push('\n');
        for p in &self.pulls {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.pull_index,
                p.part.number(),
                p.role.as_str(),
                p.arm,
                p.reward,
                p.cumulative_regret
            ));
        }
        out
    }

    pub fn total_regret(&self) -> f64 {
        self.pulls.last().map_or(0.0, |p| p.cumulative_regret)
    }

    /// Pulls of one bandit instance, in order.
    pub fn instance(&self, part: Part, role: Role) -> impl Iterator<Item = &SimPull> {
        self.pulls.iter().filter(move |p| p.part == part && p.role == role)
    }

    /// Share of an instance's last `window` pulls that went to `arm`.
    pub fn share_last(&self, part: Part, role: Role, arm: ArmId, window: usize) -> f64 {
        let arms: Vec<ArmId> = self.instance(part, role).map(|p| p.arm).collect();
        let tail = &arms[arms.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|&&a| a == arm).count() as f64 / tail.len() as f64
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationResult {
    pub sessions: usize,
    pub trace: SimulationTrace,
    pub report: ArmReport,
}

struct Rater {
    role: Role,
    profile: RaterProfile,
    means: [Vec<f64>; 2],
}

impl Rater {
    fn regret(&self, catalog: &ArmCatalog, arm: ArmId) -> Result<f64, ServiceError> {
        let means = &self.means[catalog.part.number() as usize - 1];
        let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(best - means[catalog.index_of(arm)?])
    }
}

/// Runs `n_sessions` simulated raters through the survey API, one after
/// another, then fetches the report.
pub fn run_simulation(api: &dyn SurveyApi, population: &PopulationSpec, n_sessions: usize, seed: u64) -> Result<SimulationResult, ServiceError> {
    let trace = run_sessions(api, population, 0..n_sessions, seed)?;
    let report = api.report(&ExportFilter::default())?;
    Ok(SimulationResult { sessions: n_sessions, trace, report })
}

/// Runs the sessions with the given indices. Session `i` uses rater slot `i`
/// of the population schedule (cycling) and draw index `i` for all of its
/// ratings, so a run split into consecutive ranges matches an unsplit one.
/// Regret and pull indices count from the start of the range.
pub fn run_sessions(api: &dyn SurveyApi, population: &PopulationSpec, sessions: Range<usize>, seed: u64) -> Result<SimulationTrace, ServiceError> {
    population.validate()?;
    let schedule = population.schedule();
    if !sessions.is_empty() && schedule.is_empty() {
        return Err(ServiceError::Invalid("population has no raters".into()));
    }
    let (part1, part2) = api.catalogs()?;
    let raters: Vec<Rater> = population
        .groups
        .iter()
        .map(|g| {
            let profile = g.profile.reseeded(seed);
            let means = [true_means(&part1, &profile), true_means(&part2, &profile)];
            Rater { role: g.role, profile, means }
        })
        .collect();

    let mut trace = SimulationTrace::default();
    let mut regret = 0.0;
    for i in sessions {
        let (_, g) = schedule[i % schedule.len()];
        let rater = &raters[g];
        let draw = i as u64;
        let started = api.start_session(rater.role)?;
        let kinds1 = &part1.arm(started.part1_arm)?.kinds;
        let kinds2 = &part2.arm(started.part2_arm)?.kinds;
        let id = &started.session_id;
        let mut guard = 0usize;
        loop {
            let step = api.next_step(id)?;
            if step.payload_type == PayloadType::Complete {
                break;
            }
            guard += 1;
            if guard > step.progress.total + 1 {
                return Err(ServiceError::Invalid(format!("session {id} does not advance")));
            }
            let step_ref = step.step_ref.ok_or_else(|| ServiceError::Invalid("step without step_ref".into()))?;
            let rating = match (step.expects, step.part) {
                (Expect::None, _) => None,
                (Expect::Usefulness, _) => {
                    let kind = step.evidence.as_ref().map(|e| e.kind).ok_or_else(|| ServiceError::Invalid("usefulness step without evidence".into()))?;
                    Some(rater.profile.rate_item(kind, draw))
                }
                (Expect::Confidence, Some(Part::One)) => Some(rater.profile.rate_sequence(kinds1, draw)?),
                (Expect::Confidence, _) => {
                    let patient = step.patient_index.ok_or_else(|| ServiceError::Invalid("patient step without index".into()))?;
                    Some(rater.profile.rate_patient(kinds2, patient, draw)?)
                }
            };
            let ack = api.submit(id, &Submission { kind: step.expects, rating, step_ref })?;
            if let Some(r) = ack.reward {
                let catalog = if r.part == Part::One { &part1 } else { &part2 };
                regret += rater.regret(catalog, r.arm)?;
                trace.pulls.push(SimPull {
                    pull_index: trace.pulls.len(),
                    session_index: i,
                    part: r.part,
                    role: rater.role,
                    arm: r.arm,
                    reward: r.reward,
                    cumulative_regret: regret,
                });
            }
        }
    }
    Ok(trace)
}
