//! Replication engine for the MISE study: simulate, estimate `beta0` by the
//! Lasso, fit both baseline estimators and score them with the random ISE.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cox::{cv_gamma, default_gamma, fit_lasso, CvOptions, LassoConfig};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::kernel::{cv_bandwidth_with, default_bandwidth_grid, CvRiskSet, KernelHazard};
use crate::select::{select_model, SelectOptions};
use crate::sim::{ise_rand, mean_survival_time, simulate_with_mean, stream, Scenario};
use crate::survival::{Hazard, QUADRATURE_POINTS};

/// How `gamma_n` is chosen in each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaRule {
    /// `C0 B (xi+1)/(xi-1) sqrt(2 log(p n^k)/n)` with `B` the empirical covariate bound.
    Appendix,
    /// K-fold cross-validated partial likelihood.
    Cv,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScenario {
    pub scenario: Scenario,
    pub gamma_rule: GammaRule,
    pub lasso: LassoConfig,
    pub cv: CvOptions,
    pub select: SelectOptions,
    pub bandwidth_points: usize,
    #[serde(default)]
    pub kernel_risk_set: CvRiskSet,
}

impl BenchmarkScenario {
    pub fn new(scenario: Scenario, gamma_rule: GammaRule) -> Self {
        Self {
            scenario,
            gamma_rule,
            lasso: LassoConfig::default(),
            cv: CvOptions::default(),
            select: SelectOptions::default(),
            bandwidth_points: 30,
            kernel_risk_set: CvRiskSet::AtRisk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Penalized,
    Kernel,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Penalized => "penalized",
            Estimator::Kernel => "kernel",
        }
    }
}

/// Fitted hazards on the uniform grid of `[0, tau]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub penalized: Vec<f64>,
    pub kernel: Vec<f64>,
    pub truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario_id: String,
    pub replication: u64,
    pub seed: u64,
    pub tau: f64,
    pub censoring_fraction: f64,
    pub gamma_n: f64,
    pub beta_l1_error: f64,
    pub lasso_iterations: usize,
    pub m_hat: u32,
    pub h_cv: f64,
    pub ise_penalized: f64,
    pub ise_kernel: f64,
    /// Set when the replication could not be completed; it is then left out of the means.
    pub failure: Option<String>,
    pub curves: Option<Curves>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario_id: String,
    pub estimator: Estimator,
    pub n: usize,
    pub p: usize,
    pub weibull_a: f64,
    pub weibull_b: f64,
    pub replications_ok: usize,
    pub replications_failed: usize,
    pub mean_ise: f64,
    pub sd_ise: f64,
    pub median_ise: f64,
    pub mean_beta_l1_error: f64,
    /// Mean selected level for the penalized estimator, mean bandwidth for the kernel one.
    pub mean_tuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub replications: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub emit_curves: bool,
}

fn failed(scenario: &Scenario, replication: u64, reason: String) -> ReplicationRecord {
    ReplicationRecord {
        scenario_id: scenario.id.clone(),
        replication,
        seed: scenario.seed,
        tau: f64::NAN,
        censoring_fraction: f64::NAN,
        gamma_n: f64::NAN,
        beta_l1_error: f64::NAN,
        lasso_iterations: 0,
        m_hat: 0,
        h_cv: f64::NAN,
        ise_penalized: f64::NAN,
        ise_kernel: f64::NAN,
        failure: Some(reason),
        curves: None,
    }
}

/// One replication of a scenario; failures are returned inside the record.
pub fn run_replication(
    config: &BenchmarkScenario,
    mean_survival: f64,
    replication: u64,
    options: &BenchmarkOptions,
) -> ReplicationRecord {
    let scenario = &config.scenario;
    match replication_inner(config, mean_survival, replication, options) {
        Ok(record) => record,
        Err(e) => failed(scenario, replication, e.to_string()),
    }
}

fn replication_inner(
    config: &BenchmarkScenario,
    mean_survival: f64,
    replication: u64,
    options: &BenchmarkOptions,
) -> Result<ReplicationRecord> {
    let scenario = &config.scenario;
    let sim = simulate_with_mean(scenario, replication, mean_survival)?;
    let cohort = &sim.cohort;
    let lasso = config.lasso.clone().with_empirical_bound(cohort);
    let gamma_n = match config.gamma_rule {
        GammaRule::Appendix => default_gamma(cohort.n(), cohort.p(), &lasso),
        GammaRule::Fixed(g) => g,
        GammaRule::Cv => {
            let mut rng = stream(scenario.seed, &scenario.id, replication, "cv-folds");
            cv_gamma(cohort, &lasso, &config.cv, &mut rng)?.gamma
        }
    };
    let fit = fit_lasso(cohort, gamma_n, None, &lasso)?;
    let beta_hat = &fit.beta_hat;
    let beta_l1_error = beta_hat
        .iter()
        .zip(&sim.beta0)
        .map(|(a, b)| (a - b).abs())
        .sum();

    let selected = select_model(cohort, beta_hat, &config.select)?;
    let grid = default_bandwidth_grid(cohort, config.bandwidth_points);
    let cv = cv_bandwidth_with(cohort, beta_hat, &grid, config.kernel_risk_set)?;
    let kernel = KernelHazard::new(cohort, beta_hat, cv.bandwidth)?;

    let truth = &scenario.baseline;
    let ise_penalized = ise_rand(&selected.hazard, truth, cohort, beta_hat)?;
    let ise_kernel = ise_rand(&kernel, truth, cohort, beta_hat)?;
    let censored = cohort.status().iter().filter(|s| !**s).count();

    let curves = options.emit_curves.then(|| {
        let last = (QUADRATURE_POINTS - 1) as f64;
        let t: Vec<f64> = (0..QUADRATURE_POINTS)
            .map(|k| cohort.tau() * k as f64 / last)
            .collect();
        Curves {
            penalized: t.iter().map(|&s| selected.hazard.value(s)).collect(),
            kernel: t.iter().map(|&s| kernel.value(s)).collect(),
            truth: t.iter().map(|&s| truth.value(s)).collect(),
            t,
        }
    });

    Ok(ReplicationRecord {
        scenario_id: scenario.id.clone(),
        replication,
        seed: scenario.seed,
        tau: cohort.tau(),
        censoring_fraction: censored as f64 / cohort.n() as f64,
        gamma_n,
        beta_l1_error,
        lasso_iterations: fit.iterations,
        m_hat: selected.selection.chosen_level,
        h_cv: cv.bandwidth,
        ise_penalized,
        ise_kernel,
        failure: None,
        curves,
    })
}

fn summarize(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd, median(values))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Aggregates the records of one scenario into its two report rows.
pub fn aggregate(config: &BenchmarkScenario, records: &[ReplicationRecord]) -> Vec<ReportRow> {
    let scenario = &config.scenario;
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let failed = records.len() - ok.len();
    let beta_err: Vec<f64> = ok.iter().map(|r| r.beta_l1_error).collect();
    let mean_beta = summarize(&beta_err).0;
    [Estimator::Penalized, Estimator::Kernel]
        .into_iter()
        .map(|estimator| {
            let (ise, tuning): (Vec<f64>, Vec<f64>) = ok
                .iter()
                .map(|r| match estimator {
                    Estimator::Penalized => (r.ise_penalized, f64::from(r.m_hat)),
                    Estimator::Kernel => (r.ise_kernel, r.h_cv),
                })
                .unzip();
            let (mean_ise, sd_ise, median_ise) = summarize(&ise);
            ReportRow {
                scenario_id: scenario.id.clone(),
                estimator,
                n: scenario.n,
                p: scenario.p,
                weibull_a: scenario.baseline.shape,
                weibull_b: scenario.baseline.scale,
                replications_ok: ok.len(),
                replications_failed: failed,
                mean_ise,
                sd_ise,
                median_ise,
                mean_beta_l1_error: mean_beta,
                mean_tuning: summarize(&tuning).0,
            }
        })
        .collect()
}

/// Runs every replication of every scenario on the current rayon pool.
///
/// Each replication owns its random streams and results are folded in
/// scenario/replication order, so the report does not depend on the pool size.
pub fn run_benchmark(
    config: &[BenchmarkScenario],
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    for c in config {
        c.scenario.validate()?;
    }
    let mut ids: Vec<&str> = config.iter().map(|c| c.scenario.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::input(format!("duplicate scenario id {}", w[0])));
    }
    let means: Vec<f64> = config
        .par_iter()
        .map(|c| mean_survival_time(&c.scenario))
        .collect();
    let jobs: Vec<(usize, u64)> = config
        .iter()
        .enumerate()
        .flat_map(|(s, c)| (0..c.scenario.replications as u64).map(move |r| (s, r)))
        .collect();
    let records: Vec<ReplicationRecord> = jobs
        .par_iter()
        .map(|&(s, r)| run_replication(&config[s], means[s], r, options))
        .collect();
    let mut rows = Vec::new();
    for (s, c) in config.iter().enumerate() {
        let own: Vec<ReplicationRecord> = records
            .iter()
            .zip(&jobs)
            .filter(|(_, (js, _))| *js == s)
            .map(|(r, _)| r.clone())
            .collect();
        rows.extend(aggregate(c, &own));
    }
    Ok(BenchmarkReport {
        rows,
        replications: records,
    })
}

impl BenchmarkReport {
    pub fn row(&self, scenario_id: &str, estimator: Estimator) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario_id == scenario_id && r.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "scenario,estimator,n,p,weibull_a,weibull_b,replications_ok,replications_failed,\
             mean_ise,sd_ise,median_ise,mean_beta_l1_error,mean_tuning"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario_id,
                r.estimator.name(),
                r.n,
                r.p,
                fmt_f64(r.weibull_a),
                fmt_f64(r.weibull_b),
                r.replications_ok,
                r.replications_failed,
                fmt_f64(r.mean_ise),
                fmt_f64(r.sd_ise),
                fmt_f64(r.median_ise),
                fmt_f64(r.mean_beta_l1_error),
                fmt_f64(r.mean_tuning)
            )?;
        }
        Ok(())
    }

    /// Long-format dump `scenario,replication,t,penalized,kernel,truth`.
    pub fn write_curves<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "scenario,replication,t,penalized,kernel,truth")?;
        for r in &self.replications {
            if let Some(c) = &r.curves {
                for k in 0..c.t.len() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        r.scenario_id,
                        r.replication,
                        fmt_f64(c.t[k]),
                        fmt_f64(c.penalized[k]),
                        fmt_f64(c.kernel[k]),
                        fmt_f64(c.truth[k])
                    )?;
                }
            }
        }
        Ok(())
    }
}
