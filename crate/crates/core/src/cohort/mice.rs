//! Single imputation by chained equations.
//!
//! Missing cells start at the column mean (continuous) or mode (binary). Each
//! cycle then visits every incomplete feature in schema order, regresses it on all
//! other features over the rows where it was observed, and overwrites its missing
//! cells with the fitted values. Binary targets use least squares on the 0/1
//! column thresholded at 0.5; continuous fits are clamped to the schema range.

use super::table::CohortTable;
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::scalar::Scalar;

pub const DEFAULT_MICE_CYCLES: usize = 10;

pub fn impute_mice<T: Scalar>(cohort: &CohortTable<T>, cycles: usize) -> Result<CohortTable<T>> {
    if cycles == 0 {
        return Err(Error::InvalidConfig("MICE needs at least one cycle".into()));
    }
    let schema = cohort.schema();
    let p = schema.len();
    let n = cohort.len();

    let mut observed: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut missing: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (i, row) in cohort.rows().iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell.is_some() {
                observed[j].push(i);
            } else {
                missing[j].push(i);
            }
        }
    }
    if n > 0 {
        if let Some(j) = (0..p).find(|&j| observed[j].is_empty()) {
            return Err(Error::EmptyColumn(schema.get(j).name.clone()));
        }
    }
    if missing.iter().all(Vec::is_empty) {
        return Ok(cohort.clone());
    }

    let mut current: Vec<Vec<f64>> = cohort
        .rows()
        .iter()
        .map(|r| r.iter().map(|c| c.map_or(f64::NAN, |v| v.as_f64())).collect())
        .collect();

    for j in 0..p {
        if missing[j].is_empty() {
            continue;
        }
        let obs = &observed[j];
        let mean = obs.iter().map(|&i| current[i][j]).sum::<f64>() / obs.len() as f64;
        let fill = if schema.get(j).is_binary() {
            if mean >= 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            mean
        };
        for &i in &missing[j] {
            current[i][j] = fill;
        }
    }

    let others = |row: &[f64], j: usize| -> Vec<f64> {
        row.iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &v)| v)
            .collect()
    };

    for _ in 0..cycles {
        for j in 0..p {
            if missing[j].is_empty() {
                continue;
            }
            let xs: Vec<Vec<f64>> = observed[j].iter().map(|&i| others(&current[i], j)).collect();
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let ys: Vec<f64> = observed[j].iter().map(|&i| current[i][j]).collect();
            let fit = ols(&refs, &ys)?;
            let desc = schema.get(j);
            for &i in &missing[j] {
                let pred = fit.predict(&others(&current[i], j));
                current[i][j] = desc.clamp(pred);
            }
        }
    }

    let rows = cohort
        .rows()
        .iter()
        .zip(&current)
        .map(|(orig, filled)| {
            orig.iter()
                .zip(filled)
                .map(|(c, &v)| Some(c.unwrap_or_else(|| T::lit(v))))
                .collect()
        })
        .collect();
    CohortTable::new(schema.clone(), rows, cohort.outcomes().to_vec())
}
