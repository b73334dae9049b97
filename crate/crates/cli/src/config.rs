//! TOML scenario files for the `benchmark` command.
//!
//! ```toml
//! [defaults]
//! gamma_rule = "appendix"
//! replications = 100
//!
//! [[scenario]]
//! n = 200
//! p = 15
//! weibull_a = 3.0
//! weibull_b = 4.0
//! k0 = 2.0
//! seed = 7
//! ```
//!
//! Any scenario key may also appear under `[defaults]`.

use anyhow::{bail, Context, Result};
use coxhaz::benchmark::{BenchmarkScenario, GammaRule};
use coxhaz::{CvRiskSet, Horizon, Scenario, WeibullBaseline};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GammaSetting {
    Fixed(f64),
    Rule(String),
}

impl GammaSetting {
    fn resolve(&self) -> Result<GammaRule> {
        match self {
            GammaSetting::Fixed(g) if *g > 0.0 => Ok(GammaRule::Fixed(*g)),
            GammaSetting::Fixed(g) => bail!("gamma_rule: a fixed level must be positive, got {g}"),
            GammaSetting::Rule(r) => match r.as_str() {
                "appendix" => Ok(GammaRule::Appendix),
                "cv" => Ok(GammaRule::Cv),
                other => {
                    bail!("gamma_rule: expected \"appendix\", \"cv\" or a number, got {other:?}")
                }
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: Option<String>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub weibull_a: Option<f64>,
    pub weibull_b: Option<f64>,
    pub gamma_rule: Option<GammaSetting>,
    pub k0: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub c0: Option<f64>,
    pub xi: Option<f64>,
    pub k: Option<f64>,
    pub censor_gamma: Option<f64>,
    pub tau_quantile: Option<f64>,
    pub bandwidth_points: Option<usize>,
    pub kernel_risk_set: Option<CvRiskSet>,
}

macro_rules! inherit {
    ($entry:ident, $defaults:ident, $($field:ident),*) => {
        $(if $entry.$field.is_none() { $entry.$field = $defaults.$field.clone(); })*
    };
}

impl ScenarioEntry {
    fn with_defaults(mut self, d: &ScenarioEntry) -> Self {
        inherit!(
            self,
            d,
            n,
            p,
            weibull_a,
            weibull_b,
            gamma_rule,
            k0,
            replications,
            seed,
            c0,
            xi,
            k,
            censor_gamma,
            tau_quantile,
            bandwidth_points,
            kernel_risk_set
        );
        self
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub defaults: ScenarioEntry,
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<ScenarioEntry>,
}

fn required<T: Clone>(value: &Option<T>, key: &str, index: usize) -> Result<T> {
    value
        .clone()
        .with_context(|| format!("scenario {}: missing key {key}", index + 1))
}

fn default_id(n: usize, p: usize, a: f64, b: f64) -> String {
    format!("n{n}-p{p}-W{a}-{b}")
}

/// Parses a config; `seed` from the command line overrides per-scenario seeds.
pub fn parse(text: &str, seed: Option<u64>) -> Result<Vec<BenchmarkScenario>> {
    let file: ConfigFile = toml::from_str(text).context("invalid benchmark config")?;
    if file.scenarios.is_empty() {
        bail!("benchmark config lists no [[scenario]]");
    }
    file.scenarios
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            let e = entry.with_defaults(&file.defaults);
            let n = required(&e.n, "n", i)?;
            let p = required(&e.p, "p", i)?;
            let a = required(&e.weibull_a, "weibull_a", i)?;
            let b = required(&e.weibull_b, "weibull_b", i)?;
            let seed = seed.or(e.seed).with_context(|| {
                format!("scenario {}: no seed (set `seed` in the config or pass --seed)", i + 1)
            })?;
            if p < 3 {
                bail!("scenario {}: p must be at least 3, got {p}", i + 1);
            }
            let baseline = WeibullBaseline::new(a, b).map_err(anyhow::Error::from)?;
            let id = e.id.clone().unwrap_or_else(|| default_id(n, p, a, b));
            if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
                bail!("scenario {}: id {id:?} must be non-empty and free of commas, quotes and newlines", i + 1);
            }
            let mut scenario = Scenario::new(id, n, p, baseline, seed);
            if let Some(r) = e.replications {
                scenario.replications = r;
            }
            if let Some(g) = e.censor_gamma {
                scenario.censor_gamma = g;
            }
            if let Some(q) = e.tau_quantile {
                scenario.horizon = Horizon::Quantile(q);
            }
            scenario.validate()?;
            let rule = match &e.gamma_rule {
                Some(g) => g.resolve()?,
                None => GammaRule::Appendix,
            };
            let mut config = BenchmarkScenario::new(scenario, rule);
            if let Some(k0) = e.k0 {
                config.select.k0 = k0;
            }
            if let Some(c0) = e.c0 {
                config.lasso.c0 = c0;
            }
            if let Some(xi) = e.xi {
                config.lasso.xi = xi;
            }
            if let Some(k) = e.k {
                config.lasso.k = k;
            }
            config.lasso.validate()?;
            if let Some(points) = e.bandwidth_points {
                config.bandwidth_points = points;
            }
            if let Some(rs) = e.kernel_risk_set {
                config.kernel_risk_set = rs;
            }
            Ok(config)
        })
        .collect()
}
