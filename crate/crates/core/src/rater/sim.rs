use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::profile::RaterProfile;
use crate::bandit::{normalize_mean_rating, normalize_rating, ArmCatalog, ArmId, BanditState, Part};
use crate::error::Result;

/// Number of patient cases rated per session in part 2.
pub const PATIENTS_PER_SESSION: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub pull_index: usize,
    pub arm: ArmId,
    pub reward: f64,
    pub cumulative_regret: f64,
}

/// Per-pull record of a simulated run with pseudo-regret against the best true mean.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "pull_index,arm,reward,cumulative_regret";

    pub fn push(&mut self, arm: ArmId, reward: f64, regret_step: f64) {
        let prev = self.rows.last().map_or(0.0, |r| r.cumulative_regret);
        self.rows.push(TraceRow {
            pull_index: self.rows.len() + 1,
            arm,
            reward,
            cumulative_regret: prev + regret_step,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cumulative regret after `t` pulls (t ≥ 1).
    pub fn regret_at(&self, t: usize) -> f64 {
        self.rows[t - 1].cumulative_regret
    }

    /// Share of the final `window` pulls that went to `arm`.
    pub fn share_last(&self, arm: ArmId, window: usize) -> f64 {
        let tail = &self.rows[self.rows.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|r| r.arm == arm).count() as f64 / tail.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.pull_index, r.arm, r.reward, r.cumulative_regret);
        }
        out
    }
}

/// True mean reward of each arm under `profile`.
pub fn true_means(catalog: &ArmCatalog, profile: &RaterProfile) -> Vec<f64> {
    catalog
        .arms
        .iter()
        .map(|a| match catalog.part {
            Part::One => profile.expected_reward(&a.kinds),
            Part::Two => {
                (0..PATIENTS_PER_SESSION)
                    .map(|p| (profile.expected_patient_rating(&a.kinds, p) - 1.0) / 4.0)
                    .sum::<f64>()
                    / PATIENTS_PER_SESSION as f64
            }
        })
        .collect()
}

/// Reward one simulated session gives the arm: the sequence confidence in
/// part 1, the normalised mean patient confidence in part 2.
pub fn session_reward(profile: &RaterProfile, part: Part, kinds: &[crate::evidence::EvidenceKind], draw: u64) -> Result<f64> {
    Ok(match part {
        Part::One => normalize_rating::<f64>(profile.rate_sequence(kinds, draw)?)?.value(),
        Part::Two => {
            let ratings = (0..PATIENTS_PER_SESSION)
                .map(|p| profile.rate_patient(kinds, p, draw))
                .collect::<Result<Vec<_>>>()?;
            normalize_mean_rating::<f64>(&ratings)?.value()
        }
    })
}

/// Runs UCB1 directly against a simulated rater for `n_pulls` sessions.
pub fn simulate_bandit(catalog: &ArmCatalog, profile: &RaterProfile, n_pulls: usize, seed: u64) -> Result<Trace> {
    profile.validate()?;
    let rater = profile.reseeded(seed);
    let means = true_means(catalog, &rater);
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut state = BanditState::<f64>::new(catalog.len());
    let mut trace = Trace::default();
    for t in 0..n_pulls {
        let i = state.select_arm()?;
        let arm = &catalog.arms[i];
        let reward = session_reward(&rater, catalog.part, &arm.kinds, t as u64)?;
        state.record_reward(i, crate::bandit::Reward::new(reward)?)?;
        trace.push(arm.id, reward, best - means[i]);
    }
    Ok(trace)
}
