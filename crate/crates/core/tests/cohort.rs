use proptest::prelude::*;

use trustloop::cohort::{generate_cohort, impute_mice, inject_missingness, CohortTable, GeneratorConfig};

fn small(n: usize, seed: u64) -> CohortTable<f64> {
    generate_cohort(&GeneratorConfig { n_patients: n, seed, ..Default::default() }).unwrap()
}

/// Root mean squared error over masked continuous cells, each column scaled by its spread.
fn standardized_rmse(truth: &CohortTable<f64>, masked: &CohortTable<f64>, fill: &dyn Fn(usize, usize) -> f64) -> f64 {
    let dense = truth.dense().unwrap();
    let schema = truth.schema();
    let (mut se, mut cells) = (0.0, 0);
    for j in (0..schema.len()).filter(|&j| !schema.get(j).is_binary()) {
        let m = dense.iter().map(|r| r[j]).sum::<f64>() / dense.len() as f64;
        let sd = (dense.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / dense.len() as f64).sqrt();
        for (i, row) in masked.rows().iter().enumerate() {
            if row[j].is_none() {
                se += ((fill(i, j) - dense[i][j]) / sd).powi(2);
                cells += 1;
            }
        }
    }
    (se / cells as f64).sqrt()
}

#[test]
fn mice_beats_column_means_on_correlated_cohort() {
    let truth = small(4000, 21);
    let masked = inject_missingness(&truth, 0.1, 2).unwrap();
    let imputed = impute_mice(&masked, 10).unwrap();
    let p = truth.schema().len();
    let means: Vec<f64> = (0..p)
        .map(|j| {
            let obs: Vec<f64> = masked.rows().iter().filter_map(|r| r[j]).collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect();
    let mice = standardized_rmse(&truth, &masked, &|i, j| imputed.rows()[i][j].unwrap());
    let mean = standardized_rmse(&truth, &masked, &|_, j| means[j]);
    assert!(mice <= 0.8 * mean, "mice {mice:.3} vs mean {mean:.3}");
}

#[test]
fn small_cohort_prevalence_near_target() {
    let c = small(6000, 4);
    assert!((c.prevalence() - 0.188).abs() < 0.03, "{}", c.prevalence());
    assert!(c.is_complete());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masking_never_touches_outcomes_and_keeps_observed_values(rate in 0.0f64..0.5, seed in any::<u64>()) {
        let c = small(200, 9);
        let m = inject_missingness(&c, rate, seed).unwrap();
        prop_assert_eq!(m.outcomes(), c.outcomes());
        for (a, b) in m.rows().iter().zip(c.rows()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!(x.is_none() || x == y);
            }
        }
        let frac = m.missing_count() as f64 / m.n_cells() as f64;
        prop_assert!((frac - rate).abs() < 0.05);
    }

    #[test]
    fn imputed_cells_stay_in_range_and_observed_untouched(seed in 0u64..1000) {
        let c = small(300, seed);
        let m = inject_missingness(&c, 0.15, seed).unwrap();
        let out = impute_mice(&m, 3).unwrap();
        prop_assert!(out.is_complete());
        let schema = out.schema();
        for (row, orig) in out.rows().iter().zip(m.rows()) {
            for (j, (v, o)) in row.iter().zip(orig).enumerate() {
                let v = v.unwrap();
                let d = schema.get(j);
                prop_assert!(v >= d.min && v <= d.max);
                if let Some(o) = o {
                    prop_assert_eq!(v, *o);
                }
            }
        }
    }
}
