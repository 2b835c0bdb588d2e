use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandit::{Role, MAX_RATING, MIN_RATING};
use crate::error::{Error, Result};
use crate::evidence::EvidenceKind;

/// A simulated respondent: additive utilities, a concave map, and a linear
/// penalty for every item beyond `overload_threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub utilities: BTreeMap<EvidenceKind, f64>,
    pub gamma: f64,
    pub overload_penalty: f64,
    pub overload_threshold: usize,
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Added to the raw score of patient `i` in the case-based part.
    #[serde(default)]
    pub patient_offsets: Vec<f64>,
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sequence_key(kinds: &[EvidenceKind]) -> u64 {
    kinds
        .iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, k| splitmix(h ^ (*k as u64 + 1)))
}

/// Maps a raw score onto the 1..=5 scale.
fn to_rating(raw: f64) -> i64 {
    let r = (1.0 + 4.0 * raw).round();
    (r as i64).clamp(MIN_RATING, MAX_RATING)
}

impl RaterProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.overload_penalty >= 0.0) || !self.overload_penalty.is_finite() {
            return bad("overload_penalty must be non-negative".into());
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad("noise_std must be non-negative".into());
        }
        if self.utilities.values().any(|u| !u.is_finite()) || self.patient_offsets.iter().any(|u| !u.is_finite()) {
            return bad("utilities must be finite".into());
        }
        Ok(())
    }

    /// Same profile with its noise stream mixed with a run seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.seed = splitmix(self.seed ^ splitmix(seed));
        p
    }

    pub fn utility(&self, kind: EvidenceKind) -> f64 {
        self.utilities.get(&kind).copied().unwrap_or(0.0)
    }

    /// Noise-free score before mapping to the rating scale.
    pub fn raw_score(&self, kinds: &[EvidenceKind]) -> f64 {
        let total: f64 = kinds.iter().map(|&k| self.utility(k)).sum();
        let excess = kinds.len().saturating_sub(self.overload_threshold) as f64;
        total.max(0.0).powf(self.gamma) - self.overload_penalty * excess
    }

    fn noise(&self, kinds: &[EvidenceKind], draw: u64) -> f64 {
        if self.noise_std == 0.0 {
            return 0.0;
        }
        let key = splitmix(self.seed ^ splitmix(sequence_key(kinds) ^ splitmix(draw)));
        let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(key));
        self.noise_std * z
    }

    /// Confidence in a whole sequence; deterministic in (profile, kinds, draw).
    pub fn rate_sequence(&self, kinds: &[EvidenceKind], draw: u64) -> Result<i64> {
        if kinds.is_empty() {
            return Err(Error::InvalidInput("cannot rate an empty sequence".into()));
        }
        Ok(to_rating(self.raw_score(kinds) + self.noise(kinds, draw)))
    }

    /// Usefulness of a single item.
    pub fn rate_item(&self, kind: EvidenceKind, draw: u64) -> i64 {
        to_rating(self.utility(kind) + self.noise(&[kind], draw ^ 0x17e3))
    }

    /// Confidence after seeing a patient case under the given sequence.
    pub fn rate_patient(&self, kinds: &[EvidenceKind], patient: usize, draw: u64) -> Result<i64> {
        if kinds.is_empty() {
            return Err(Error::InvalidInput("cannot rate an empty sequence".into()));
        }
        let offset = self.patient_offsets.get(patient).copied().unwrap_or(0.0);
        Ok(to_rating(self.raw_score(kinds) + offset + self.noise(kinds, splitmix(draw) ^ patient as u64)))
    }

    /// Expected rating of `rate_sequence`: the rounded, clipped normal has mean
    /// 5 − Σ_{r=1..4} Φ((r + ½ − μ)/s) with μ = 1 + 4·raw and s = 4σ.
    pub fn expected_rating(&self, kinds: &[EvidenceKind]) -> f64 {
        self.expected_rating_at(self.raw_score(kinds))
    }

    pub fn expected_patient_rating(&self, kinds: &[EvidenceKind], patient: usize) -> f64 {
        self.expected_rating_at(self.raw_score(kinds) + self.patient_offsets.get(patient).copied().unwrap_or(0.0))
    }

    fn expected_rating_at(&self, raw: f64) -> f64 {
        if self.noise_std == 0.0 {
            return to_rating(raw) as f64;
        }
        let mu = 1.0 + 4.0 * raw;
        let n = Normal::new(mu, 4.0 * self.noise_std).expect("positive std");
        5.0 - (1..=4).map(|r| n.cdf(r as f64 + 0.5)).sum::<f64>()
    }

    /// Expected normalised reward, i.e. the arm's true mean for regret.
    pub fn expected_reward(&self, kinds: &[EvidenceKind]) -> f64 {
        (self.expected_rating(kinds) - 1.0) / 4.0
    }

    fn from_pairs(pairs: &[(EvidenceKind, f64)], gamma: f64, penalty: f64, threshold: usize, noise: f64) -> Self {
        RaterProfile {
            utilities: pairs.iter().copied().collect(),
            gamma,
            overload_penalty: penalty,
            overload_threshold: threshold,
            noise_std: noise,
            seed: 0,
            patient_offsets: Vec::new(),
        }
    }

    /// Values methodology and sensitivity, cares little for linear coefficients.
    pub fn clinician_like() -> Self {
        use EvidenceKind::*;
        let mut p = Self::from_pairs(
            &[
                (Data, 0.15),
                (Methodology, 0.30),
                (Accuracy, 0.20),
                (StratifiedLinear, 0.05),
                (StratifiedTree, 0.15),
                (PatientInfo, 0.35),
                (Sensitivity, 0.30),
                (LocalLinear, 0.02),
                (LocalTree, 0.12),
                (Outcome, 0.15),
            ],
            0.85,
            0.25,
            4,
            0.12,
        );
        p.patient_offsets = vec![0.05, -0.05, -0.1, 0.0];
        p
    }

    /// The mirror image: linear coefficients valued, methodology and sensitivity less so.
    pub fn expert_like() -> Self {
        use EvidenceKind::*;
        let mut p = Self::from_pairs(
            &[
                (Data, 0.20),
                (Methodology, 0.08),
                (Accuracy, 0.25),
                (StratifiedLinear, 0.25),
                (StratifiedTree, 0.15),
                (PatientInfo, 0.30),
                (Sensitivity, 0.08),
                (LocalLinear, 0.25),
                (LocalTree, 0.15),
                (Outcome, 0.15),
            ],
            0.9,
            0.2,
            4,
            0.12,
        );
        p.patient_offsets = vec![0.0, 0.05, -0.05, 0.05];
        p
    }

    /// Equal utilities with a heavy penalty beyond three items.
    pub fn overloaded() -> Self {
        let pairs: Vec<_> = EvidenceKind::ALL.iter().map(|&k| (k, 0.25)).collect();
        Self::from_pairs(&pairs, 0.9, 0.3, 3, 0.1)
    }

    /// Only data and accuracy help and every extra item hurts, so the shortest
    /// sequence in each part is best by a wide margin.
    pub fn planted_gap() -> Self {
        use EvidenceKind::*;
        Self::from_pairs(&[(Data, 0.4), (Accuracy, 0.4), (PatientInfo, 0.8), (Sensitivity, -0.2)], 1.0, 0.4, 2, 0.1)
    }
}

/// A group of identical raters in a population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterGroup {
    pub role: Role,
    pub count: usize,
    pub profile: RaterProfile,
}

/// A study population, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub groups: Vec<RaterGroup>,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidConfig("population has no groups".into()));
        }
        for g in &self.groups {
            g.profile.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PopulationSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// 14 clinician-like and 30 expert-like raters.
    pub fn study() -> Self {
        PopulationSpec {
            groups: vec![
                RaterGroup { role: Role::Clinician, count: 14, profile: RaterProfile::clinician_like() },
                RaterGroup { role: Role::MlExpert, count: 30, profile: RaterProfile::expert_like() },
            ],
        }
    }

    /// Session order: groups expanded then interleaved evenly, so each role's
    /// raters are spread across the run. Returns (role, group index) pairs.
    pub fn schedule(&self) -> Vec<(Role, usize)> {
        let total = self.total();
        let mut slots: Vec<(f64, usize, Role, usize)> = Vec::with_capacity(total);
        for (gi, g) in self.groups.iter().enumerate() {
            for i in 0..g.count {
                slots.push(((i as f64 + 0.5) / g.count as f64, gi, g.role, gi));
            }
        }
        slots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        slots.into_iter().map(|(_, _, r, g)| (r, g)).collect()
    }
}
