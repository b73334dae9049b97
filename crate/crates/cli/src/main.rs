mod config;
mod jobs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coxhaz::benchmark::GammaRule;
use coxhaz::{
    CvOptions, CvRiskSet, GuardRule, Horizon, LassoConfig, Scenario, SelectOptions, WeibullBaseline,
};
use serde_json::json;

use jobs::Job;
use manifest::{manifest_path, RunManifest, Timings};

/// Lasso Cox regression, penalized histogram estimation of the baseline
/// hazard and the Monte Carlo comparison with a kernel estimator.
#[derive(Debug, Parser)]
#[command(name = "coxhaz", version)]
struct Cli {
    /// Size of the worker pool (default: all cores, or RAYON_NUM_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one cohort under the Cox model with a Weibull baseline.
    Simulate(SimulateArgs),
    /// Fit the l1-penalized Cox regression.
    FitCox(FitCoxArgs),
    /// Penalized selection of a histogram estimator of the baseline hazard.
    FitBaseline(FitBaselineArgs),
    /// Kernel estimator of the baseline hazard with a cross-validated bandwidth.
    FitKernel(FitKernelArgs),
    /// Run the replication study described by a TOML config.
    Benchmark(BenchmarkArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Weibull shape `a` and scale `lambda` of `alpha0(t) = a lambda^a t^(a-1)`.
    #[arg(long, num_args = 2, value_names = ["A", "LAMBDA"])]
    weibull: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Label mixed into the random stream key.
    #[arg(long, default_value = "simulate")]
    id: String,
    #[arg(long, default_value_t = 4.5)]
    censor_gamma: f64,
    /// Study horizon as a quantile of `T ∧ C`.
    #[arg(long, default_value_t = 0.9, conflicts_with = "tau")]
    tau_quantile: f64,
    /// Fixed study horizon.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Appendix,
    Cv,
}

#[derive(Debug, Args)]
struct FitCoxArgs {
    #[arg(long)]
    input: PathBuf,
    /// Overrides the `# tau=` line of the input.
    #[arg(long)]
    tau: Option<f64>,
    /// Fixed regularization level.
    #[arg(long, conflicts_with = "gamma_rule")]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "appendix")]
    gamma_rule: RuleArg,
    #[arg(long, default_value_t = 3.0)]
    xi: f64,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    /// Covariate bound `B` (default: the largest |Z| in the cohort).
    #[arg(long)]
    b_bound: Option<f64>,
    /// Radius of the l1 ball constraint.
    #[arg(long)]
    ball_radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GuardArg {
    Practical,
    Off,
}

#[derive(Debug, Args)]
struct FitBaselineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    k0: f64,
    #[arg(long, value_enum, default_value = "practical")]
    guard: GuardArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RiskSetArg {
    AtRisk,
    Weighted,
}

#[derive(Debug, Args)]
struct FitKernelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    beta: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 30)]
    grid_size: usize,
    /// Skip cross-validation and use this bandwidth.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Risk-set normalisation of the CV cross term.
    #[arg(long, value_enum, default_value = "at-risk")]
    risk_set: RiskSetArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the fitted curves of every replication.
    #[arg(long)]
    emit_curves: bool,
    /// Seed for every scenario; required unless each scenario sets its own.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Write the primary output here instead of the recorded path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        bail!("--{name} must be positive, got {v}")
    }
}

fn resolve(command: Command) -> Result<Job> {
    Ok(match command {
        Command::Simulate(a) => {
            let baseline = WeibullBaseline::new(a.weibull[0], a.weibull[1])?;
            let mut scenario = Scenario::new(a.id, a.n, a.p, baseline, a.seed);
            scenario.censor_gamma = a.censor_gamma;
            scenario.replications = 1;
            scenario.horizon = match a.tau {
                Some(t) => Horizon::Fixed(t),
                None => Horizon::Quantile(a.tau_quantile),
            };
            if a.p < 3 {
                bail!("--p must be at least 3 for beta0 = (0.1, 0.3, 0.5, 0, ...)");
            }
            scenario.validate()?;
            Job::Simulate {
                scenario,
                replication: a.replication,
                out: a.out,
            }
        }
        Command::FitCox(a) => {
            let gamma = match (a.gamma, a.gamma_rule) {
                (Some(g), _) => GammaRule::Fixed(positive("gamma", g)?),
                (None, RuleArg::Appendix) => GammaRule::Appendix,
                (None, RuleArg::Cv) => {
                    if a.seed.is_none() {
                        bail!("--gamma-rule cv needs --seed for the fold split");
                    }
                    GammaRule::Cv
                }
            };
            let lasso = LassoConfig {
                c0: a.c0,
                xi: a.xi,
                k: a.k,
                ..LassoConfig::default()
            };
            lasso.validate()?;
            if let Some(r) = a.ball_radius {
                positive("ball-radius", r)?;
            }
            Job::FitCox {
                input: a.input,
                tau: a.tau,
                gamma,
                lasso,
                b_bound: a.b_bound.map(|b| positive("b-bound", b)).transpose()?,
                ball_radius: a.ball_radius,
                cv: CvOptions {
                    folds: a.folds,
                    ..CvOptions::default()
                },
                seed: a.seed,
                out: a.out,
            }
        }
        Command::FitBaseline(a) => Job::FitBaseline {
            input: a.input,
            beta: a.beta,
            tau: a.tau,
            select: SelectOptions {
                k0: positive("k0", a.k0)?,
                guard: match a.guard {
                    GuardArg::Practical => GuardRule::Practical,
                    GuardArg::Off => GuardRule::Off,
                },
            },
            out: a.out,
        },
        Command::FitKernel(a) => {
            if a.grid_size == 0 {
                bail!("--grid-size must be at least 1");
            }
            Job::FitKernel {
                input: a.input,
                beta: a.beta,
                tau: a.tau,
                grid_size: a.grid_size,
                bandwidth: a.bandwidth.map(|h| positive("bandwidth", h)).transpose()?,
                risk_set: match a.risk_set {
                    RiskSetArg::AtRisk => CvRiskSet::AtRisk,
                    RiskSetArg::Weighted => CvRiskSet::Weighted,
                },
                out: a.out,
            }
        }
        Command::Benchmark(a) => {
            let text = std::fs::read_to_string(&a.config)
                .with_context(|| format!("cannot read {}", a.config.display()))?;
            let scenarios = config::parse(&text, a.seed)
                .with_context(|| format!("in config {}", a.config.display()))?;
            Job::Benchmark {
                scenarios,
                emit_curves: a.emit_curves,
                out: a.out,
            }
        }
        Command::Replay(a) => {
            let mut job = RunManifest::read(&a.manifest)?.job;
            if let Some(out) = a.out {
                job.set_out(out);
            }
            job
        }
    })
}

fn execute(job: Job, argv: Vec<String>, threads: Option<usize>) -> Result<()> {
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let clock = Instant::now();
    let outcome = job.run()?;
    let elapsed_ms = clock.elapsed().as_secs_f64() * 1e3;
    for w in &outcome.warnings {
        eprintln!("{}", json!({ "warning": w }));
    }
    let manifest = RunManifest {
        tool: "coxhaz".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: job.name().into(),
        argv,
        threads,
        seed: job.seed(),
        inputs: job.inputs(),
        outputs: outcome.outputs,
        diagnostics: outcome.diagnostics,
        warnings: outcome.warnings,
        job: job.clone(),
        timings: Timings {
            started_unix_ms,
            elapsed_ms,
        },
    };
    manifest.write(&manifest_path(job.out()))
}

/// Classifies an error for the machine-readable record and the exit code.
fn error_record(err: &anyhow::Error) -> (serde_json::Value, u8) {
    let message = format!("{err:#}");
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<coxhaz::Error>() {
            return match e {
                coxhaz::Error::Parse { line, column, .. } => (
                    json!({ "kind": "parse", "message": message, "line": line, "column": column }),
                    3,
                ),
                coxhaz::Error::Dimension { .. } => {
                    (json!({ "kind": "dimension", "message": message }), 3)
                }
                coxhaz::Error::Input(_) => (json!({ "kind": "input", "message": message }), 3),
                coxhaz::Error::NonConvergence { .. } => {
                    (json!({ "kind": "non-convergence", "message": message }), 4)
                }
                coxhaz::Error::AllGuardsFailed { .. } => (
                    json!({ "kind": "all-guards-failed", "message": message }),
                    4,
                ),
                coxhaz::Error::Io(_) => (json!({ "kind": "io", "message": message }), 5),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (json!({ "kind": "io", "message": message }), 5);
        }
    }
    (json!({ "kind": "input", "message": message }), 3)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": e.to_string().trim_end() } })
            );
            return ExitCode::from(2);
        }
    };
    let threads = cli.threads;
    let result = (|| -> Result<()> {
        let job = resolve(cli.command)?;
        match threads {
            Some(0) => bail!("--threads must be at least 1"),
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()?
                .install(|| execute(job, argv.clone(), threads)),
            None => execute(job, argv.clone(), threads),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (record, code) = error_record(&err);
            eprintln!("{}", json!({ "error": record }));
            ExitCode::from(code)
        }
    }
}
