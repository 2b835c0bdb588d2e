//! Ranking and classification metrics.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Decision threshold for accuracy.
pub const ACCURACY_THRESHOLD: f64 = 0.5;

fn check<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    Ok(())
}

fn order_by_score<T: Scalar>(scores: &[T], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    idx
}

/// Area under the ROC curve: P(score_pos > score_neg) + ½·P(tie), computed from
/// mid-ranks in O(n log n).
pub fn auc_roc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let idx = order_by_score(scores, false);
    let mut rank_sum_pos = 0.0f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their average
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = idx[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        start = end;
    }
    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(T::lit(u / (p * n_neg as f64)))
}

/// Average precision: Σ over distinct score thresholds (descending) of
/// precision × recall increment, with no interpolation.
pub fn auc_pr<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let idx = order_by_score(scores, true);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0f64;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let new_tp = idx[start..end].iter().filter(|&&i| labels[i]).count();
        tp += new_tp;
        fp += (end - start) - new_tp;
        if new_tp > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += precision * new_tp as f64 / n_pos as f64;
        }
        start = end;
    }
    Ok(T::lit(ap))
}

/// Fraction of rows where `score >= 0.5` agrees with the label.
pub fn accuracy<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores".into()));
    }
    let thr = T::lit(ACCURACY_THRESHOLD);
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| (s >= thr) == l)
        .count();
    Ok(T::lit(hits as f64 / scores.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_roc_hand_example() {
        let auc: f64 = auc_roc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_roc_perfect_and_ties() {
        let auc: f64 = auc_roc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(auc, 1.0);
        let auc: f64 = auc_roc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_roc_single_class_rejected() {
        assert!(matches!(auc_roc(&[0.1f64, 0.2], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_pr_examples() {
        let ap: f64 = auc_pr(&[0.9, 0.8, 0.7, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(ap, 1.0);
        let ap: f64 = auc_pr(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!(matches!(auc_pr(&[0.5f64], &[false]), Err(Error::NoPositives)));
    }

    #[test]
    fn accuracy_uses_half_threshold() {
        let acc: f32 = accuracy(&[0.5f32, 0.49, 0.9, 0.1], &[true, false, false, false]).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn nan_score_rejected() {
        assert!(auc_roc(&[f64::NAN, 0.1], &[true, false]).is_err());
    }
}
