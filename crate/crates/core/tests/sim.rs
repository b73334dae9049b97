use coxhaz::benchmark::{run_benchmark, BenchmarkOptions, BenchmarkScenario, GammaRule};
use coxhaz::io::{read_cohort, write_cohort};
use coxhaz::kernel::default_bandwidth_grid;
use coxhaz::{
    cv_bandwidth, fit_lasso, ise_rand, select_model, simulate_cohort, FnHazard, Hazard,
    LassoConfig, Scenario, SelectOptions, WeibullBaseline,
};
use proptest::prelude::*;

fn comparison_baselines() -> [WeibullBaseline; 3] {
    [(1.5, 1.0), (0.5, 2.0), (3.0, 4.0)].map(|(a, l)| WeibullBaseline::new(a, l).unwrap())
}

#[test]
fn covariates_are_centred() {
    let sc = Scenario::new("z", 500, 20, WeibullBaseline::new(1.0, 1.0).unwrap(), 5);
    let sim = simulate_cohort(&sc, 0).unwrap();
    let z = sim.cohort.covariate_matrix();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let se = (1.0f64 / 3.0).sqrt() / (z.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean {mean}");
    assert!(z.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn censoring_rate_is_moderate() {
    for (n, p) in [(200, 15), (200, 200), (500, 22), (500, 500)] {
        for w in comparison_baselines() {
            let sc = Scenario::new(format!("c{n}-{p}"), n, p, w, 9);
            let mut censored = 0.0;
            for r in 0..5 {
                let sim = simulate_cohort(&sc, r).unwrap();
                censored += sim.cohort.status().iter().filter(|s| !**s).count() as f64 / n as f64;
            }
            let rate = censored / 5.0;
            assert!((0.10..=0.35).contains(&rate), "{w:?} n={n} p={p}: {rate}");
        }
    }
}

#[test]
fn csv_round_trip_gives_identical_estimates() {
    let sc = Scenario::new("rt", 120, 6, WeibullBaseline::new(1.5, 1.0).unwrap(), 21);
    let sim = simulate_cohort(&sc, 2).unwrap();
    let mut buf = Vec::new();
    write_cohort(&mut buf, &sim.cohort).unwrap();
    let back = read_cohort(buf.as_slice(), None).unwrap();
    assert_eq!(back, sim.cohort);

    let config = LassoConfig::default();
    let a = fit_lasso(&sim.cohort, 0.02, None, &config).unwrap();
    let b = fit_lasso(&back, 0.02, None, &config).unwrap();
    assert_eq!(a, b);
    let sa = select_model(&sim.cohort, &a.beta_hat, &SelectOptions::default()).unwrap();
    let sb = select_model(&back, &b.beta_hat, &SelectOptions::default()).unwrap();
    assert_eq!(sa, sb);
    let grid = default_bandwidth_grid(&back, 30);
    assert_eq!(
        cv_bandwidth(&sim.cohort, &a.beta_hat, &grid).unwrap(),
        cv_bandwidth(&back, &b.beta_hat, &grid).unwrap()
    );
}

#[test]
fn report_does_not_depend_on_replication_order() {
    let mut sc = Scenario::new("order", 80, 5, WeibullBaseline::new(1.5, 1.0).unwrap(), 4);
    sc.replications = 6;
    let config = BenchmarkScenario::new(sc, GammaRule::Appendix);
    let report =
        run_benchmark(std::slice::from_ref(&config), &BenchmarkOptions::default()).unwrap();
    let mut shuffled = report.replications.clone();
    shuffled.reverse();
    assert_eq!(
        coxhaz::benchmark::aggregate(&config, &shuffled)[0].mean_ise,
        report.rows[0].mean_ise
    );
    let again = run_benchmark(&[config], &BenchmarkOptions::default()).unwrap();
    assert_eq!(report, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn ise_grows_with_pointwise_error(rep in 0u64..1000, shift in 0.01f64..2.0, extra in 0.01f64..2.0) {
        let truth = WeibullBaseline::new(1.5, 1.0).unwrap();
        let sc = Scenario::new("ise", 40, 3, truth, 17);
        let sim = simulate_cohort(&sc, rep).unwrap();
        let beta = [0.1, 0.2, -0.3];
        let near = FnHazard(move |t: f64| truth.value(t) + shift);
        let far = FnHazard(move |t: f64| truth.value(t) + shift + extra);
        let a = ise_rand(&near, &truth, &sim.cohort, &beta).unwrap();
        let b = ise_rand(&far, &truth, &sim.cohort, &beta).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!(b > a);
        prop_assert_eq!(ise_rand(&truth, &truth, &sim.cohort, &beta).unwrap(), 0.0);
    }
}
