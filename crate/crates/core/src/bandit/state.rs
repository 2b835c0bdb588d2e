use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A reward in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Scalar")]
pub struct Reward<T>(T);

impl<T: Scalar> Reward<T> {
    pub fn new(value: T) -> Result<Self> {
        let v = value.as_f64();
        if (0.0..=1.0).contains(&v) {
            Ok(Reward(value))
        } else {
            Err(Error::RewardOutOfRange(v))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

pub const MIN_RATING: i64 = 1;
pub const MAX_RATING: i64 = 5;

pub fn check_rating(rating: i64) -> Result<()> {
    if (MIN_RATING..=MAX_RATING).contains(&rating) {
        Ok(())
    } else {
        Err(Error::RatingOutOfRange(rating))
    }
}

/// Maps a 1..=5 rating onto [0, 1].
pub fn normalize_rating<T: Scalar>(rating: i64) -> Result<Reward<T>> {
    check_rating(rating)?;
    Ok(Reward(T::count((rating - MIN_RATING) as usize) / T::lit(4.0)))
}

/// Mean of several ratings, normalised; used for the per-session patient reward.
pub fn normalize_mean_rating<T: Scalar>(ratings: &[i64]) -> Result<Reward<T>> {
    if ratings.is_empty() {
        return Err(Error::InvalidInput("no ratings to average".into()));
    }
    for &r in ratings {
        check_rating(r)?;
    }
    let sum: i64 = ratings.iter().map(|r| r - MIN_RATING).sum();
    Reward::new(T::count(sum as usize) / T::count(4 * ratings.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ArmStats<T> {
    pub pulls: u64,
    pub reward_sum: T,
}

impl<T: Scalar> ArmStats<T> {
    pub fn mean(&self) -> Option<T> {
        (self.pulls > 0).then(|| self.reward_sum / T::lit(self.pulls as f64))
    }
}

/// Exploration bonus added to an arm's mean.
pub fn ucb_bonus<T: Scalar>(total: u64, pulls: u64) -> T {
    (T::lit(2.0) * T::lit(total as f64).ln() / T::lit(pulls as f64)).sqrt()
}

/// UCB1 choice over raw (pulls, reward sum) pairs: first unpulled arm, else the
/// highest mean + bonus with ties to the lowest index.
pub fn ucb_select<T: Scalar>(stats: &[ArmStats<T>]) -> Result<usize> {
    if stats.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if let Some(i) = stats.iter().position(|s| s.pulls == 0) {
        return Ok(i);
    }
    let total: u64 = stats.iter().map(|s| s.pulls).sum();
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, s) in stats.iter().enumerate() {
        let v = s.reward_sum / T::lit(s.pulls as f64) + ucb_bonus::<T>(total, s.pulls);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ArmBound<T> {
    pub pulls: u64,
    /// 0 for unpulled arms.
    pub mean: T,
    /// `None` for unpulled arms, whose bound is unbounded.
    pub upper: Option<T>,
}

/// Pull counts and reward sums for one bandit instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BanditState<T> {
    arms: Vec<ArmStats<T>>,
    total_pulls: u64,
}

impl<T: Scalar> BanditState<T> {
    pub fn new(n_arms: usize) -> Self {
        BanditState { arms: vec![ArmStats::default(); n_arms], total_pulls: 0 }
    }

    pub fn arms(&self) -> &[ArmStats<T>] {
        &self.arms
    }

    pub fn total_pulls(&self) -> u64 {
        self.total_pulls
    }

    pub fn select_arm(&self) -> Result<usize> {
        ucb_select(&self.arms)
    }

    pub fn record_reward(&mut self, arm: usize, reward: Reward<T>) -> Result<()> {
        let n = self.arms.len();
        let s = self
            .arms
            .get_mut(arm)
            .ok_or_else(|| Error::UnknownArm(format!("index {arm} of {n}")))?;
        s.pulls += 1;
        s.reward_sum += reward.value();
        self.total_pulls += 1;
        Ok(())
    }

    pub fn ucb_bounds(&self) -> Vec<ArmBound<T>> {
        self.arms
            .iter()
            .map(|s| match s.mean() {
                Some(m) => ArmBound { pulls: s.pulls, mean: m, upper: Some(m + ucb_bonus::<T>(self.total_pulls, s.pulls)) },
                None => ArmBound { pulls: 0, mean: T::zero(), upper: None },
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rating_map() {
        assert_eq!(normalize_rating::<f64>(5).unwrap().value(), 1.0);
        assert_eq!(normalize_rating::<f64>(1).unwrap().value(), 0.0);
        assert_eq!(normalize_rating::<f64>(3).unwrap().value(), 0.5);
        assert!(matches!(normalize_rating::<f64>(6), Err(Error::RatingOutOfRange(6))));
        assert!(normalize_rating::<f64>(0).is_err());
        assert_eq!(normalize_mean_rating::<f64>(&[3, 3, 4, 4]).unwrap().value(), 0.625);
    }

    #[test]
    fn initialisation_then_ucb() {
        let mut s = BanditState::<f64>::new(2);
        assert_eq!(s.select_arm().unwrap(), 0);
        s.record_reward(0, Reward::new(0.5).unwrap()).unwrap();
        assert_eq!(s.select_arm().unwrap(), 1);
        s.record_reward(1, Reward::new(1.0).unwrap()).unwrap();
        s.record_reward(0, Reward::new(0.5).unwrap()).unwrap();
        let b = s.ucb_bounds();
        assert!((b[0].upper.unwrap() - 1.548).abs() < 1e-3);
        assert!((b[1].upper.unwrap() - 2.482).abs() < 1e-3);
        assert_eq!(s.select_arm().unwrap(), 1);
    }

    #[test]
    fn single_pull_bound_is_mean() {
        let mut s = BanditState::<f64>::new(1);
        s.record_reward(0, Reward::new(0.5).unwrap()).unwrap();
        assert_eq!(s.ucb_bounds()[0].upper, Some(0.5));
        assert_eq!(s.select_arm().unwrap(), 0);
    }

    #[test]
    fn bad_inputs() {
        assert!(Reward::new(1.5f64).is_err());
        assert!(Reward::new(-0.1f64).is_err());
        let mut s = BanditState::<f64>::new(2);
        assert!(s.record_reward(2, Reward::new(0.1).unwrap()).is_err());
        assert_eq!(s.total_pulls(), 0);
        assert!(matches!(BanditState::<f64>::new(0).select_arm(), Err(Error::EmptyCatalog)));
    }
}
