//! Risk quintiles and the per-stratum linear surrogates.

use serde::{Deserialize, Serialize};

use crate::cohort::CohortTable;
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::model::RiskScorer;
use crate::scalar::Scalar;

pub const N_STRATA: usize = 5;

/// Strata with fewer rows than this are flagged sparse (one per coefficient).
pub const MIN_STRATUM_ROWS: usize = 32;

/// Significance level for displayed coefficients.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Quintile of a risk in [0, 1]: left-closed bands of width 0.2, with 1.0 in the top band.
pub fn stratum_of<T: Scalar>(risk: T) -> Result<usize> {
    let r = risk.as_f64();
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidInput(format!("risk {r} outside [0, 1]")));
    }
    // integer comparison against the band edges avoids 0.6 / 0.2 = 2.9999…
    let s = [0.2, 0.4, 0.6, 0.8].iter().take_while(|&&edge| r >= edge).count();
    Ok(s)
}

/// Risk scores for every row, grouped by stratum (row indices).
pub(crate) fn partition<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    rows: &[Vec<T>],
) -> Result<(Vec<T>, [Vec<usize>; N_STRATA])> {
    let preds = scorer.risk_batch(rows);
    let mut groups: [Vec<usize>; N_STRATA] = Default::default();
    for (i, &p) in preds.iter().enumerate() {
        groups[stratum_of(p)?].push(i);
    }
    Ok((preds, groups))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CoefficientRow<T> {
    pub feature: String,
    pub coefficient: T,
    /// `None` when the stratum has too few rows for a t-test.
    pub p_value: Option<f64>,
    pub significant: bool,
}

/// Linear regression of the model's risk on the features within one stratum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StratumLinear<T> {
    pub stratum_index: usize,
    pub n_train: usize,
    pub sparse: bool,
    pub intercept: T,
    pub coefficients: Vec<CoefficientRow<T>>,
    /// Mean squared error against the model's predictions in the stratum.
    pub fidelity: T,
}

impl<T: Scalar> StratumLinear<T> {
    pub fn significant(&self) -> impl Iterator<Item = &CoefficientRow<T>> {
        self.coefficients.iter().filter(|c| c.significant)
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, &v)| c.coefficient * v).sum::<T>()
    }
}

/// One OLS surrogate per risk quintile, fitted to the scorer's predictions.
pub fn fit_stratified_linear<T: Scalar>(
    scorer: &dyn RiskScorer<T>,
    cohort: &CohortTable<T>,
) -> Result<Vec<StratumLinear<T>>> {
    let rows = cohort.dense()?;
    let (preds, groups) = partition(scorer, &rows)?;
    let names: Vec<&str> = cohort.schema().names().collect();
    groups
        .iter()
        .enumerate()
        .map(|(s, idx)| {
            if idx.is_empty() {
                return Err(Error::EmptyStratum(s));
            }
            let xs: Vec<&[T]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
            let ys: Vec<T> = idx.iter().map(|&i| preds[i]).collect();
            let fit = ols(&xs, &ys)?;
            let sparse = idx.len() < MIN_STRATUM_ROWS;
            let coefficients = names
                .iter()
                .zip(&fit.slopes)
                .zip(&fit.p_values)
                .map(|((name, &b), &p)| {
                    let p_value = (!sparse && p.is_finite()).then_some(p);
                    CoefficientRow {
                        feature: (*name).to_owned(),
                        coefficient: b,
                        p_value,
                        significant: p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL),
                    }
                })
                .collect();
            let fidelity = fit.rss / T::count(idx.len());
            Ok(StratumLinear {
                stratum_index: s,
                n_train: idx.len(),
                sparse,
                intercept: fit.intercept,
                coefficients,
                fidelity,
            })
        })
        .collect()
}
