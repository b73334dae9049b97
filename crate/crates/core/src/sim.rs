//! Cohorts simulated under the Cox model with a Weibull baseline, and the
//! covariate-weighted integrated squared error used to score estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::survival::{weighted_risk_integral_sq, Cohort, Difference, Hazard, WeibullBaseline};

/// Number of auxiliary survival draws used to estimate `E[T_1]`.
pub const MEAN_SURVIVAL_DRAWS: usize = 100_000;

/// Independent random stream keyed by `(seed, scenario, replication, tag)`.
///
/// The key is hashed into a ChaCha8 seed, so streams do not depend on the
/// order in which replications are run.
pub fn stream(seed: u64, scenario: &str, replication: u64, tag: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((scenario.len() as u64).to_le_bytes());
    hasher.update(scenario.as_bytes());
    hasher.update(replication.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// How the study horizon is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Empirical quantile of `T_i ∧ C_i`.
    Quantile(f64),
    Fixed(f64),
}

/// `beta0 = (0.1, 0.3, 0.5, 0, ..., 0)` of length `p`.
pub fn sparse_beta0(p: usize) -> Vec<f64> {
    let mut b = vec![0.0; p];
    for (slot, v) in b.iter_mut().zip([0.1, 0.3, 0.5]) {
        *slot = v;
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub n: usize,
    pub p: usize,
    pub baseline: WeibullBaseline,
    pub beta0: Vec<f64>,
    /// Censoring times are exponential with mean `censor_gamma * E[T_1]`.
    pub censor_gamma: f64,
    /// Nominal censoring rate that `censor_gamma` is tuned to; informational.
    pub target_censoring: f64,
    pub horizon: Horizon,
    pub replications: usize,
    pub seed: u64,
}

impl Scenario {
    /// Standard design: `beta0 = (0.1, 0.3, 0.5, 0, ...)`, `gamma = 4.5`,
    /// horizon at the 90% quantile, 100 replications.
    pub fn new(
        id: impl Into<String>,
        n: usize,
        p: usize,
        baseline: WeibullBaseline,
        seed: u64,
    ) -> Self {
        Self {
            id: id.into(),
            n,
            p,
            baseline,
            beta0: sparse_beta0(p),
            censor_gamma: 4.5,
            target_censoring: 0.20,
            horizon: Horizon::Quantile(0.9),
            replications: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::input(format!(
                "scenario {}: n must be at least 2",
                self.id
            )));
        }
        if self.beta0.len() != self.p {
            return Err(Error::Dimension {
                context: "scenario beta0",
                expected: self.p,
                got: self.beta0.len(),
            });
        }
        if self.replications == 0 {
            return Err(Error::input(format!(
                "scenario {}: replications must be >= 1",
                self.id
            )));
        }
        if !(self.censor_gamma > 0.0) {
            return Err(Error::input(format!(
                "scenario {}: censor_gamma must be positive",
                self.id
            )));
        }
        match self.horizon {
            Horizon::Quantile(q) if !(q > 0.0 && q <= 1.0) => Err(Error::input(format!(
                "scenario {}: horizon quantile must be in (0, 1]",
                self.id
            ))),
            Horizon::Fixed(t) if !(t > 0.0) => Err(Error::input(format!(
                "scenario {}: horizon must be positive",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

/// A simulated cohort with its latent times and the generating parameters.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub cohort: Cohort,
    pub survival_times: Vec<f64>,
    pub censoring_times: Vec<f64>,
    pub beta0: Vec<f64>,
    pub baseline: WeibullBaseline,
}

/// `T = (1/lambda) (E e^{-beta0'Z})^{1/a}`, the inverse of `S(t|Z) = exp(-(lambda t)^a e^{beta0'Z})`.
fn draw_survival_time<R: Rng + ?Sized>(baseline: &WeibullBaseline, eta: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    (e * (-eta).exp()).powf(1.0 / baseline.shape) / baseline.scale
}

/// Monte Carlo estimate of `E[T_1]` from its own random stream.
pub fn mean_survival_time(scenario: &Scenario) -> f64 {
    let mut rng = stream(scenario.seed, &scenario.id, u64::MAX, "mean-survival");
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let active: Vec<f64> = scenario
        .beta0
        .iter()
        .copied()
        .filter(|b| *b != 0.0)
        .collect();
    let mut total = 0.0;
    for _ in 0..MEAN_SURVIVAL_DRAWS {
        let eta: f64 = active.iter().map(|b| b * unit.sample(&mut rng)).sum();
        total += draw_survival_time(&scenario.baseline, eta, &mut rng);
    }
    total / MEAN_SURVIVAL_DRAWS as f64
}

/// Linear-interpolation sample quantile.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Draws replication `replication` of a scenario.
///
/// Covariates are i.i.d. uniform on `[-1, 1]`; `X_i = T_i ∧ C_i ∧ tau` and
/// `delta_i = 1{T_i <= C_i ∧ tau}`.
pub fn simulate_cohort(scenario: &Scenario, replication: u64) -> Result<SimulatedCohort> {
    scenario.validate()?;
    let mean_t = mean_survival_time(scenario);
    simulate_with_mean(scenario, replication, mean_t)
}

/// As [`simulate_cohort`] with a precomputed `E[T_1]`.
pub fn simulate_with_mean(
    scenario: &Scenario,
    replication: u64,
    mean_survival: f64,
) -> Result<SimulatedCohort> {
    let (n, p) = (scenario.n, scenario.p);
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let censor = Exp::new(1.0 / (scenario.censor_gamma * mean_survival))
        .map_err(|e| Error::input(format!("censoring rate: {e}")))?;
    let mut z_rng = stream(scenario.seed, &scenario.id, replication, "covariates");
    let mut t_rng = stream(scenario.seed, &scenario.id, replication, "survival");
    let mut c_rng = stream(scenario.seed, &scenario.id, replication, "censoring");

    let covariates: Vec<f64> = (0..n * p).map(|_| unit.sample(&mut z_rng)).collect();
    let survival_times: Vec<f64> = covariates
        .chunks_exact(p.max(1))
        .take(n)
        .map(|row| {
            let eta: f64 = row.iter().zip(&scenario.beta0).map(|(z, b)| z * b).sum();
            draw_survival_time(&scenario.baseline, eta, &mut t_rng)
        })
        .collect();
    let censoring_times: Vec<f64> = (0..n).map(|_| censor.sample(&mut c_rng)).collect();
    let latent: Vec<f64> = survival_times
        .iter()
        .zip(&censoring_times)
        .map(|(t, c)| t.min(*c))
        .collect();
    let tau = match scenario.horizon {
        Horizon::Quantile(q) => quantile(&latent, q),
        Horizon::Fixed(t) => t,
    };
    let (times, status): (Vec<f64>, Vec<bool>) = survival_times
        .iter()
        .zip(&censoring_times)
        .map(|(&t, &c)| {
            let c_tilde = c.min(tau);
            (t.min(c_tilde), t <= c_tilde)
        })
        .unzip();
    let cohort = Cohort::from_columns(times, status, covariates, p, tau)?;
    Ok(SimulatedCohort {
        cohort,
        survival_times,
        censoring_times,
        beta0: scenario.beta0.clone(),
        baseline: scenario.baseline,
    })
}

/// `(1/n) sum_i int_0^{X_i} (alpha - alpha0)^2 e^{beta_hat'Z_i} dt`.
pub fn ise_rand<H: Hazard, T: Hazard>(
    alpha: &H,
    truth: &T,
    cohort: &Cohort,
    beta_hat: &[f64],
) -> Result<f64> {
    let weights = cohort.relative_risks(beta_hat)?;
    Ok(weighted_risk_integral_sq(
        cohort,
        &weights,
        &Difference(alpha, truth),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    use crate::survival::ConstantHazard;

    #[test]
    fn streams_are_keyed() {
        let a: u64 = stream(7, "s", 0, "x").random();
        let b: u64 = stream(7, "s", 0, "x").random();
        let c: u64 = stream(7, "s", 1, "x").random();
        let d: u64 = stream(7, "s", 0, "y").random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn standard_exponential_times() {
        let mut sc = Scenario::new("exp", 10, 3, WeibullBaseline::new(1.0, 1.0).unwrap(), 3);
        sc.beta0 = vec![0.0; 3];
        let m = mean_survival_time(&sc);
        let se = 1.0 / (MEAN_SURVIVAL_DRAWS as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn reproducible_and_clipped() {
        let sc = Scenario::new("w34", 200, 15, WeibullBaseline::new(3.0, 4.0).unwrap(), 11);
        let a = simulate_cohort(&sc, 4).unwrap();
        let b = simulate_cohort(&sc, 4).unwrap();
        assert_eq!(a.cohort, b.cohort);
        let tau = a.cohort.tau();
        assert!(a.cohort.times().iter().all(|&x| x <= tau));
        assert!(a.cohort.times().iter().any(|&x| x >= tau));
        let c = simulate_cohort(&sc, 5).unwrap();
        assert_ne!(a.cohort, c.cohort);
    }

    #[test]
    fn ise_examples() {
        let tau = 2.0;
        let c = Cohort::from_columns(vec![tau], vec![false], vec![0.4], 1, tau).unwrap();
        let zero = ConstantHazard { value: 0.0, tau };
        let k = 1.3;
        let alpha = ConstantHazard { value: k, tau };
        assert_relative_eq!(
            ise_rand(&alpha, &zero, &c, &[0.0]).unwrap(),
            k * k * tau,
            epsilon = 1e-12
        );
        let w = WeibullBaseline::new(1.5, 1.0).unwrap();
        assert_eq!(ise_rand(&w, &w, &c, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        assert_relative_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
        assert_relative_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 1.0), 4.0);
    }
}
