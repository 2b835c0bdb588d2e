use serde::{Deserialize, Serialize};

use super::train::RiskScorer;
use crate::cohort::CohortTable;
use crate::error::Result;
use crate::linalg::ols;
use crate::scalar::Scalar;

/// Least-squares fit of the 0/1 outcome on the features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearBaseline<T> {
    pub intercept: T,
    pub slopes: Vec<T>,
    pub ridge: bool,
}

impl<T: Scalar> LinearBaseline<T> {
    /// Intercept followed by one coefficient per feature.
    pub fn coefficients(&self) -> Vec<T> {
        std::iter::once(self.intercept).chain(self.slopes.iter().copied()).collect()
    }

    /// Raw linear prediction.
    pub fn predict(&self, x: &[T]) -> T {
        self.intercept + self.slopes.iter().zip(x).map(|(&b, &v)| b * v).sum::<T>()
    }

    /// Prediction clamped to [0, 1] for use as a risk score.
    pub fn score(&self, x: &[T]) -> T {
        self.predict(x).max(T::zero()).min(T::one())
    }
}

impl<T: Scalar> RiskScorer<T> for LinearBaseline<T> {
    fn risk(&self, x: &[T]) -> T {
        self.score(x)
    }
}

pub fn train_linear_baseline<T: Scalar>(cohort: &CohortTable<T>) -> Result<LinearBaseline<T>> {
    let rows = cohort.dense()?;
    fit_rows(&rows, cohort.outcomes())
}

pub(crate) fn fit_rows<T: Scalar>(rows: &[Vec<T>], labels: &[bool]) -> Result<LinearBaseline<T>> {
    let refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
    let y: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let fit = ols(&refs, &y)?;
    Ok(LinearBaseline { intercept: fit.intercept, slopes: fit.slopes, ridge: fit.ridge })
}
