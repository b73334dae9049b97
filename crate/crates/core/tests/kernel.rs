mod common;

use common::cohort_and_beta;
use coxhaz::kernel::{breslow_weights, cv_criterion, default_bandwidth_grid};
use coxhaz::{cv_bandwidth, epanechnikov, l2_norm_sq, Cohort, Hazard, KernelHazard};
use proptest::prelude::*;

fn scaled(c: &Cohort, factor: f64) -> Cohort {
    let times = c.times().iter().map(|t| t * factor).collect();
    Cohort::from_columns(
        times,
        c.status().to_vec(),
        c.covariate_matrix().to_vec(),
        c.p(),
        c.tau() * factor,
    )
    .unwrap()
}

fn permuted(c: &Cohort, order: &[usize]) -> Cohort {
    c.subset(order).unwrap()
}

/// Direct double loop over all ordered pairs `i != j`.
fn naive_criterion(c: &Cohort, beta: &[f64], h: f64) -> f64 {
    let n = c.n();
    let ybar: Vec<f64> = (0..n)
        .map(|i| c.times().iter().filter(|&&x| x >= c.times()[i]).count() as f64)
        .collect();
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && c.is_event(i) && c.is_event(j) {
                let d = (c.times()[i] - c.times()[j]) / h;
                cross += epanechnikov(d) / h / ybar[i] / ybar[j];
            }
        }
    }
    let fit = KernelHazard::new(c, beta, h).unwrap();
    l2_norm_sq(&fit, c.tau()) - 2.0 * cross
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn time_rescaling((c, beta) in cohort_and_beta(30, 3, 1.0), factor in 0.1f64..10.0, h in 0.05f64..0.5, s in 0.0f64..1.0) {
        let big = scaled(&c, factor);
        let a = KernelHazard::new(&c, &beta, h).unwrap().value(s);
        let b = KernelHazard::new(&big, &beta, h * factor).unwrap().value(s * factor);
        prop_assert!((b - a / factor).abs() <= 1e-9 * (a / factor).abs().max(1e-12), "{} vs {}", b, a / factor);
    }

    #[test]
    fn permutation_invariance((c, beta) in cohort_and_beta(30, 3, 1.0), h in 0.05f64..0.5, key in prop::collection::vec(any::<u32>(), 30)) {
        let mut order: Vec<usize> = (0..c.n()).collect();
        order.sort_by_key(|&i| (key[i], i));
        let d = permuted(&c, &order);
        let (a, b) = (KernelHazard::new(&c, &beta, h).unwrap(), KernelHazard::new(&d, &beta, h).unwrap());
        for k in 0..50 {
            let t = k as f64 / 49.0;
            prop_assert!((a.value(t) - b.value(t)).abs() <= 1e-12 * a.value(t).abs().max(1.0));
        }
        let w = breslow_weights(&c, &beta).unwrap();
        let v = breslow_weights(&d, &beta).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert!((w[i] - v[pos]).abs() <= 1e-12 * w[i].max(1e-300));
        }
    }

    #[test]
    fn criterion_matches_double_loop((c, beta) in cohort_and_beta(40, 2, 1.0), h in 0.02f64..0.6) {
        let fast = cv_criterion(&c, &beta, h).unwrap();
        let slow = naive_criterion(&c, &beta, h);
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "{} vs {}", fast, slow);
    }

    #[test]
    fn cv_returns_grid_argmin((c, beta) in cohort_and_beta(40, 2, 1.0)) {
        let grid = default_bandwidth_grid(&c, 30);
        let cv = cv_bandwidth(&c, &beta, &grid).unwrap();
        let k = grid.iter().position(|h| *h == cv.bandwidth).unwrap();
        prop_assert!(cv.criterion.iter().all(|v| cv.criterion[k] <= *v));
    }
}
