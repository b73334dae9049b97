#![allow(dead_code)]

use coxhaz::Cohort;
use proptest::prelude::*;

/// Random cohort on `[0, 1]` with `tau = 1`. Times are rounded to a coarse
/// grid with some probability so that ties occur.
pub fn cohort_strategy(max_n: usize, max_p: usize) -> impl Strategy<Value = Cohort> {
    (1..=max_n, 1..=max_p, any::<bool>()).prop_flat_map(|(n, p, coarse)| {
        (
            prop::collection::vec(0.001f64..1.0, n),
            prop::collection::vec(prop::bool::weighted(0.7), n),
            prop::collection::vec(-1.0f64..1.0, n * p),
        )
            .prop_map(move |(times, status, cov)| {
                let times = if coarse {
                    times.iter().map(|t| (t * 10.0).ceil() / 10.0).collect()
                } else {
                    times
                };
                Cohort::from_columns(times, status, cov, p, 1.0).unwrap()
            })
    })
}

pub fn beta_strategy(p: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, p)
}

/// Cohort of size `n` with `p` covariates and a coefficient vector.
pub fn cohort_and_beta(
    max_n: usize,
    max_p: usize,
    scale: f64,
) -> impl Strategy<Value = (Cohort, Vec<f64>)> {
    cohort_strategy(max_n, max_p).prop_flat_map(move |c| {
        let p = c.p();
        (Just(c), beta_strategy(p, scale))
    })
}
