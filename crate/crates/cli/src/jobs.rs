//! Fully resolved commands. A `Job` is what a manifest stores, so a replay
//! runs exactly the same computation as the original invocation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coxhaz::benchmark::{run_benchmark, BenchmarkOptions, BenchmarkScenario, GammaRule};
use coxhaz::io::{
    fmt_f64, read_beta, read_cohort, write_beta, write_cohort, write_curve, write_histogram,
};
use coxhaz::kernel::{cv_bandwidth_with, default_bandwidth_grid};
use coxhaz::sim::stream;
use coxhaz::{
    cv_gamma, default_gamma, fit_lasso, select_model, simulate_cohort, Cohort, CvOptions,
    CvRiskSet, KernelHazard, LassoConfig, Scenario, SelectOptions,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        scenario: Scenario,
        replication: u64,
        out: PathBuf,
    },
    FitCox {
        input: PathBuf,
        tau: Option<f64>,
        gamma: GammaRule,
        lasso: LassoConfig,
        /// `None` takes the empirical covariate bound of the cohort.
        b_bound: Option<f64>,
        ball_radius: Option<f64>,
        cv: CvOptions,
        seed: Option<u64>,
        out: PathBuf,
    },
    FitBaseline {
        input: PathBuf,
        beta: PathBuf,
        tau: Option<f64>,
        select: SelectOptions,
        out: PathBuf,
    },
    FitKernel {
        input: PathBuf,
        beta: PathBuf,
        tau: Option<f64>,
        grid_size: usize,
        bandwidth: Option<f64>,
        risk_set: CvRiskSet,
        out: PathBuf,
    },
    Benchmark {
        scenarios: Vec<BenchmarkScenario>,
        emit_curves: bool,
        out: PathBuf,
    },
}

/// Files written and command-specific diagnostics.
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
}

/// `report.csv` -> `report.<suffix>` next to it.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_cohort(path: &Path, tau: Option<f64>) -> Result<Cohort> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_cohort(file, tau).with_context(|| format!("reading cohort {}", path.display()))
}

fn load_beta(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_beta(file).with_context(|| format!("reading coefficients {}", path.display()))
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

fn meta(key: &str, value: impl Into<String>) -> (String, String) {
    (key.to_string(), value.into())
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate { .. } => "simulate",
            Job::FitCox { .. } => "fit-cox",
            Job::FitBaseline { .. } => "fit-baseline",
            Job::FitKernel { .. } => "fit-kernel",
            Job::Benchmark { .. } => "benchmark",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Job::Simulate { out, .. }
            | Job::FitCox { out, .. }
            | Job::FitBaseline { out, .. }
            | Job::FitKernel { out, .. }
            | Job::Benchmark { out, .. } => out,
        }
    }

    pub fn set_out(&mut self, path: PathBuf) {
        match self {
            Job::Simulate { out, .. }
            | Job::FitCox { out, .. }
            | Job::FitBaseline { out, .. }
            | Job::FitKernel { out, .. }
            | Job::Benchmark { out, .. } => *out = path,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Job::FitCox { input, .. } => vec![input.clone()],
            Job::FitBaseline { input, beta, .. } | Job::FitKernel { input, beta, .. } => {
                vec![input.clone(), beta.clone()]
            }
            _ => Vec::new(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate { scenario, .. } => Some(scenario.seed),
            Job::FitCox { seed, .. } => *seed,
            Job::Benchmark { scenarios, .. } => scenarios.first().map(|s| s.scenario.seed),
            _ => None,
        }
    }

    pub fn run(&self) -> Result<Outcome> {
        match self {
            Job::Simulate {
                scenario,
                replication,
                out,
            } => {
                let sim = simulate_cohort(scenario, *replication)?;
                let mut w = create(out)?;
                write_cohort(&mut w, &sim.cohort)?;
                w.flush()?;
                let censored = sim.cohort.status().iter().filter(|s| !**s).count();
                Ok(Outcome {
                    outputs: vec![out.clone()],
                    diagnostics: json!({
                        "tau": sim.cohort.tau(),
                        "censoring_fraction": censored as f64 / sim.cohort.n() as f64,
                        "beta0": sim.beta0,
                    }),
                    warnings: Vec::new(),
                })
            }
            Job::FitCox {
                input,
                tau,
                gamma,
                lasso,
                b_bound,
                ball_radius,
                cv,
                seed,
                out,
            } => {
                let cohort = load_cohort(input, *tau)?;
                let mut config = lasso.clone().with_empirical_bound(&cohort);
                if let Some(b) = b_bound {
                    config.b_bound = *b;
                }
                config.validate()?;
                let mut details = json!({});
                let gamma_n = match gamma {
                    GammaRule::Fixed(g) => *g,
                    GammaRule::Appendix => default_gamma(cohort.n(), cohort.p(), &config),
                    GammaRule::Cv => {
                        let seed =
                            seed.context("--gamma-rule cv needs --seed for the fold split")?;
                        let mut rng = stream(seed, "fit-cox", 0, "cv-folds");
                        let chosen = cv_gamma(&cohort, &config, cv, &mut rng)?;
                        details = json!({ "cv_grid": chosen.grid, "cv_scores": chosen.scores });
                        chosen.gamma
                    }
                };
                let fit = fit_lasso(&cohort, gamma_n, *ball_radius, &config)?;
                let mut w = create(out)?;
                write_beta(&mut w, &fit.beta_hat)?;
                w.flush()?;
                details["gamma_n"] = json!(fit.gamma_n);
                details["b_bound"] = json!(config.b_bound);
                details["iterations"] = json!(fit.iterations);
                details["kkt_residual"] = json!(fit.kkt_residual);
                details["objective"] = json!(fit.objective);
                details["converged"] = json!(fit.converged);
                Ok(Outcome {
                    outputs: vec![out.clone()],
                    diagnostics: details,
                    warnings: Vec::new(),
                })
            }
            Job::FitBaseline {
                input,
                beta,
                tau,
                select,
                out,
            } => {
                let cohort = load_cohort(input, *tau)?;
                let beta = load_beta(beta)?;
                let fit = select_model(&cohort, &beta, select)?;
                let s = &fit.selection;
                let criterion = joined(
                    s.criterion_values
                        .iter()
                        .map(|v| v.map_or_else(|| "NA".to_string(), fmt_f64)),
                );
                let failures = joined(s.guard_failures.iter().map(|m| m.to_string()));
                let metadata = vec![
                    meta("m_hat", s.chosen_level.to_string()),
                    meta("k0", fmt_f64(s.penalty_constant)),
                    meta("sup_norm_plugin", fmt_f64(s.sup_norm_plugin)),
                    meta("criterion_values", criterion),
                    meta("guard_failures", failures),
                    meta("tau", fmt_f64(cohort.tau())),
                ];
                let mut w = create(out)?;
                write_histogram(&mut w, &fit.hazard, &metadata)?;
                w.flush()?;
                let mut warnings = Vec::new();
                if s.no_events {
                    warnings.push("no events on [0, tau]: every coefficient is zero".to_string());
                }
                if s.plugin_guard_failed {
                    warnings.push(
                        "the sup-norm plug-in fit failed its guard; plug-in set to 0".to_string(),
                    );
                }
                Ok(Outcome {
                    outputs: vec![out.clone()],
                    diagnostics: serde_json::to_value(s)?,
                    warnings,
                })
            }
            Job::FitKernel {
                input,
                beta,
                tau,
                grid_size,
                bandwidth,
                risk_set,
                out,
            } => {
                let cohort = load_cohort(input, *tau)?;
                let beta = load_beta(beta)?;
                let (h, cv) = match bandwidth {
                    Some(h) => (*h, None),
                    None => {
                        let grid = default_bandwidth_grid(&cohort, *grid_size);
                        let cv = cv_bandwidth_with(&cohort, &beta, &grid, *risk_set)?;
                        (cv.bandwidth, Some(cv))
                    }
                };
                let fit = KernelHazard::new(&cohort, &beta, h)?;
                let mut metadata = vec![
                    meta("bandwidth", fmt_f64(h)),
                    meta("cv_first_term", "plug-in-integral"),
                    meta(
                        "risk_set",
                        match risk_set {
                            CvRiskSet::AtRisk => "at-risk",
                            CvRiskSet::Weighted => "weighted",
                        },
                    ),
                    meta("tau", fmt_f64(cohort.tau())),
                ];
                if let Some(cv) = &cv {
                    metadata.push(meta("grid", joined(cv.grid.iter().map(|v| fmt_f64(*v)))));
                    metadata.push(meta(
                        "criterion",
                        joined(cv.criterion.iter().map(|v| fmt_f64(*v))),
                    ));
                }
                let mut w = create(out)?;
                write_curve(&mut w, &fit, cohort.tau(), &metadata)?;
                w.flush()?;
                Ok(Outcome {
                    outputs: vec![out.clone()],
                    diagnostics: json!({ "bandwidth": h, "cv": cv }),
                    warnings: Vec::new(),
                })
            }
            Job::Benchmark {
                scenarios,
                emit_curves,
                out,
            } => {
                let report = run_benchmark(
                    scenarios,
                    &BenchmarkOptions {
                        emit_curves: *emit_curves,
                    },
                )?;
                let mut w = create(out)?;
                report.write_csv(&mut w)?;
                w.flush()?;
                let log_path = sibling(out, "log.jsonl");
                let mut log = create(&log_path)?;
                for r in &report.replications {
                    let line = json!({
                        "scenario": r.scenario_id,
                        "seed": [r.seed, r.scenario_id, r.replication],
                        "tau": r.tau,
                        "censoring_fraction": r.censoring_fraction,
                        "gamma_n": r.gamma_n,
                        "beta_l1_error": r.beta_l1_error,
                        "m_hat": r.m_hat,
                        "h_cv": r.h_cv,
                        "ise_penalized": r.ise_penalized,
                        "ise_kernel": r.ise_kernel,
                        "failure": r.failure,
                    });
                    writeln!(log, "{line}")?;
                }
                log.flush()?;
                let mut outputs = vec![out.clone(), log_path];
                if *emit_curves {
                    let curves = sibling(out, "curves.csv");
                    let mut c = create(&curves)?;
                    report.write_curves(&mut c)?;
                    c.flush()?;
                    outputs.push(curves);
                }
                let failed: usize = report
                    .rows
                    .iter()
                    .step_by(2)
                    .map(|r| r.replications_failed)
                    .sum();
                let warnings = if failed > 0 {
                    vec![format!(
                        "{failed} replications failed and were left out of the means"
                    )]
                } else {
                    Vec::new()
                };
                Ok(Outcome {
                    outputs,
                    diagnostics: json!({ "replications_failed": failed }),
                    warnings,
                })
            }
        }
    }
}
