use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::table::CohortTable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Masks each feature cell independently with probability `rate` (missing
/// completely at random). Outcomes are never masked.
pub fn inject_missingness<T: Scalar>(cohort: &CohortTable<T>, rate: f64, seed: u64) -> Result<CohortTable<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("missingness rate {rate} must lie in [0, 1)")));
    }
    let mut out = cohort.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in out.rows_mut() {
        for cell in row.iter_mut() {
            if rng.random::<f64>() < rate {
                *cell = None;
            }
        }
    }
    Ok(out)
}
