//! Cox partial log-likelihood and its l1-penalized estimator.
//!
//! The estimator minimises `-l_n(beta) + gamma_n |beta|_1`, optionally over
//! the l1-ball `|beta|_1 <= R1`, by proximal gradient with soft-thresholding,
//! Barzilai-Borwein trial steps and a sufficient-decrease backtracking test.
//! The backtracking test majorises the smooth part, so every accepted step
//! decreases the composite objective.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::Cohort;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Constant `C0` of the regularization level.
    pub c0: f64,
    /// Sup bound `B` on the covariates.
    pub b_bound: f64,
    /// Cone parameter `xi > 1`.
    pub xi: f64,
    /// Confidence exponent `k`.
    pub k: f64,
    pub max_iter: usize,
    /// Tolerance on the KKT residual.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            c0: 1.0,
            b_bound: 1.0,
            xi: 3.0,
            k: 1.0,
            max_iter: 50_000,
            tol: 1e-7,
        }
    }
}

impl LassoConfig {
    /// Sets `B` to the largest absolute covariate of the cohort.
    pub fn with_empirical_bound(mut self, cohort: &Cohort) -> Self {
        let b = cohort.max_abs_covariate();
        self.b_bound = if b > 0.0 { b } else { 1.0 };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 1.0) {
            return Err(Error::input(format!("xi must exceed 1, got {}", self.xi)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.c0 > 0.0 && self.b_bound > 0.0 && self.k > 0.0) {
            return Err(Error::input("c0, b_bound and k must be positive"));
        }
        Ok(())
    }
}

/// Output of [`fit_lasso`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta_hat: Vec<f64>,
    pub gamma_n: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// `-l_n(beta_hat) + gamma_n |beta_hat|_1`.
    pub objective: f64,
    pub ball_radius: Option<f64>,
    pub converged: bool,
    /// Composite objective after each accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

/// Regularization level `C0 B (xi+1)/(xi-1) sqrt(2 log(p n^k) / n)`.
pub fn default_gamma(n: usize, p: usize, config: &LassoConfig) -> f64 {
    let n_f = n as f64;
    let log_term = (p as f64).ln() + config.k * n_f.ln();
    config.c0 * config.b_bound * (config.xi + 1.0) / (config.xi - 1.0)
        * (2.0 * log_term / n_f).sqrt()
}

/// Precomputed risk-set structure of a cohort: subjects sorted by time,
/// grouped by tied times.
pub(crate) struct PartialLikelihood<'a> {
    cohort: &'a Cohort,
    order: Vec<usize>,
    groups: Vec<Range<usize>>,
    events: Vec<bool>,
    n_events: usize,
}

impl<'a> PartialLikelihood<'a> {
    pub(crate) fn new(cohort: &'a Cohort) -> Self {
        let times = cohort.times();
        let mut order: Vec<usize> = (0..cohort.n()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=order.len() {
            if k == order.len() || times[order[k]] != times[order[start]] {
                groups.push(start..k);
                start = k;
            }
        }
        let events: Vec<bool> = (0..cohort.n()).map(|i| cohort.is_event(i)).collect();
        let n_events = events.iter().filter(|e| **e).count();
        Self {
            cohort,
            order,
            groups,
            events,
            n_events,
        }
    }

    /// Shifted relative risks and the shifted risk-set sums per tie group.
    fn risk_sums(&self, eta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let risk: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
        let mut sums = vec![0.0; self.groups.len()];
        let mut acc = 0.0;
        for (g, range) in self.groups.iter().enumerate().rev() {
            acc += self.order[range.clone()]
                .iter()
                .map(|&i| risk[i])
                .sum::<f64>();
            sums[g] = acc;
        }
        (shift, risk, sums)
    }

    /// `sum_{events} [eta_i - log sum_{X_j >= X_i} e^{eta_j}]`.
    fn log_lik_sum(&self, eta: &[f64]) -> f64 {
        let (shift, _, sums) = self.risk_sums(eta);
        let mut total = 0.0;
        for (g, range) in self.groups.iter().enumerate() {
            let log_s = sums[g].ln() + shift;
            for &i in &self.order[range.clone()] {
                if self.events[i] {
                    total += eta[i] - log_s;
                }
            }
        }
        total
    }

    /// `l_n(beta)` from the linear predictor.
    pub(crate) fn value_eta(&self, eta: &[f64]) -> f64 {
        let n = self.cohort.n() as f64;
        (self.log_lik_sum(eta) + self.n_events as f64 * n.ln()) / n
    }

    pub(crate) fn value_and_grad_eta(&self, eta: &[f64]) -> (f64, Vec<f64>) {
        let cohort = self.cohort;
        let n = cohort.n() as f64;
        let p = cohort.p();
        let (shift, risk, sums) = self.risk_sums(eta);
        // residual_l = 1{event_l} - e^{eta_l} sum_{events i: X_i <= X_l} 1/S(X_i)
        let mut residual = vec![0.0; cohort.n()];
        let mut hazard = 0.0;
        let mut value = 0.0;
        for (g, range) in self.groups.iter().enumerate() {
            let members = &self.order[range.clone()];
            let d = members.iter().filter(|&&i| self.events[i]).count();
            if d > 0 {
                hazard += d as f64 / sums[g];
                let log_s = sums[g].ln() + shift;
                value += members
                    .iter()
                    .filter(|&&i| self.events[i])
                    .map(|&i| eta[i] - log_s)
                    .sum::<f64>();
            }
            for &i in members {
                residual[i] = f64::from(u8::from(self.events[i])) - risk[i] * hazard;
            }
        }
        let mut grad = vec![0.0; p];
        let z = cohort.covariate_matrix();
        for (row, r) in z.chunks_exact(p.max(1)).zip(&residual) {
            if *r != 0.0 {
                for (g, zj) in grad.iter_mut().zip(row) {
                    *g += zj * r;
                }
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let value = (value + self.n_events as f64 * n.ln()) / n;
        (value, grad)
    }
}

/// Cox partial log-likelihood `l_n(beta)`, normalised by `1/n`.
pub fn partial_log_lik(cohort: &Cohort, beta: &[f64]) -> Result<f64> {
    let eta = cohort.linear_predictor(beta)?;
    Ok(PartialLikelihood::new(cohort).value_eta(&eta))
}

/// Gradient of [`partial_log_lik`].
pub fn partial_log_lik_grad(cohort: &Cohort, beta: &[f64]) -> Result<Vec<f64>> {
    let eta = cohort.linear_predictor(beta)?;
    Ok(PartialLikelihood::new(cohort).value_and_grad_eta(&eta).1)
}

/// Smallest `gamma_n` for which `beta_hat = 0`: `max_j |d l_n / d beta_j (0)|`.
pub fn null_gamma(cohort: &Cohort) -> f64 {
    let eta = vec![0.0; cohort.n()];
    PartialLikelihood::new(cohort)
        .value_and_grad_eta(&eta)
        .1
        .iter()
        .fold(0.0, |m, g| m.max(g.abs()))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Euclidean projection onto `{b : |b|_1 <= radius}` (sort-based simplex projection).
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    if l1(v) <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| soft_threshold(x, theta)).collect()
}

/// KKT residual of `grad + gamma * subgradient(|.|_1) (+ normal cone of the ball)`,
/// where `grad` is the gradient of `-l_n`.
pub fn kkt_residual(beta: &[f64], grad: &[f64], gamma: f64, ball_radius: Option<f64>) -> f64 {
    let residual_at = |level: f64| {
        beta.iter()
            .zip(grad)
            .map(|(&b, &g)| {
                if b != 0.0 {
                    (g + level * b.signum()).abs()
                } else {
                    (g.abs() - level).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    };
    let plain = residual_at(gamma);
    match ball_radius {
        Some(r) if l1(beta) >= r * (1.0 - 1e-12) => {
            // On the sphere the ball adds mu * subgradient(|.|_1) for some mu >= 0.
            let active: Vec<f64> = beta
                .iter()
                .zip(grad)
                .filter(|(b, _)| **b != 0.0)
                .map(|(b, g)| -g * b.signum())
                .collect();
            if active.is_empty() {
                return plain;
            }
            let mu = (active.iter().sum::<f64>() / active.len() as f64 - gamma).max(0.0);
            plain.min(residual_at(gamma + mu))
        }
        _ => plain,
    }
}

/// l1-penalized partial-likelihood estimator started at `beta = 0`.
pub fn fit_lasso(
    cohort: &Cohort,
    gamma_n: f64,
    ball_radius: Option<f64>,
    config: &LassoConfig,
) -> Result<CoxFit> {
    let start = vec![0.0; cohort.p()];
    fit_lasso_from(cohort, gamma_n, ball_radius, config, &start)
}

/// As [`fit_lasso`], warm-started at `start`.
pub fn fit_lasso_from(
    cohort: &Cohort,
    gamma_n: f64,
    ball_radius: Option<f64>,
    config: &LassoConfig,
    start: &[f64],
) -> Result<CoxFit> {
    config.validate()?;
    cohort.check_beta(start)?;
    if !(gamma_n > 0.0 && gamma_n.is_finite()) {
        return Err(Error::input(format!(
            "gamma_n must be positive, got {gamma_n}"
        )));
    }
    if let Some(r) = ball_radius {
        if !(r > 0.0) {
            return Err(Error::input(format!(
                "ball radius must be positive, got {r}"
            )));
        }
    }
    let lik = PartialLikelihood::new(cohort);
    let prox = |v: &[f64], step: f64| -> Vec<f64> {
        let thresholded: Vec<f64> = v
            .iter()
            .map(|&x| soft_threshold(x, step * gamma_n))
            .collect();
        match ball_radius {
            Some(r) => project_l1_ball(&thresholded, r),
            None => thresholded,
        }
    };

    let mut beta = match ball_radius {
        Some(r) => project_l1_ball(start, r),
        None => start.to_vec(),
    };
    let mut eta = cohort.linear_predictor(&beta)?;
    let (value, g) = lik.value_and_grad_eta(&eta);
    let mut smooth = -value;
    let mut grad: Vec<f64> = g.into_iter().map(|x| -x).collect();
    let mut trace = vec![smooth + gamma_n * l1(&beta)];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut residual = kkt_residual(&beta, &grad, gamma_n, ball_radius);
    let mut stalled = false;

    while residual > config.tol && iterations < config.max_iter {
        iterations += 1;
        let mut halvings = 0;
        let (cand, cand_eta, cand_smooth) = loop {
            let trial: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
            let cand = prox(&trial, step);
            let cand_eta = cohort.linear_predictor(&cand)?;
            let cand_smooth = -lik.value_eta(&cand_eta);
            let (lin, sq) = beta
                .iter()
                .zip(&cand)
                .zip(&grad)
                .fold((0.0, 0.0), |(lin, sq), ((b, c), g)| {
                    (lin + g * (c - b), sq + (c - b) * (c - b))
                });
            if cand_smooth <= smooth + lin + sq / (2.0 * step) {
                break (cand, cand_eta, cand_smooth);
            }
            step *= 0.5;
            halvings += 1;
            if halvings > 200 || step < 1e-300 {
                stalled = true;
                break (beta.clone(), eta.clone(), smooth);
            }
        };
        if stalled {
            break;
        }
        let (_, g) = lik.value_and_grad_eta(&cand_eta);
        let cand_grad: Vec<f64> = g.into_iter().map(|x| -x).collect();
        let (ss, sy) = cand
            .iter()
            .zip(&beta)
            .zip(cand_grad.iter().zip(&grad))
            .fold((0.0, 0.0), |(ss, sy), ((c, b), (gc, gb))| {
                let s = c - b;
                (ss + s * s, sy + s * (gc - gb))
            });
        step = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-12, 1e12)
        } else {
            (step * 2.0).min(1e12)
        };
        beta = cand;
        eta = cand_eta;
        smooth = cand_smooth;
        grad = cand_grad;
        trace.push(smooth + gamma_n * l1(&beta));
        residual = kkt_residual(&beta, &grad, gamma_n, ball_radius);
    }

    let fit = CoxFit {
        objective: smooth + gamma_n * l1(&beta),
        beta_hat: beta,
        gamma_n,
        kkt_residual: residual,
        iterations,
        ball_radius,
        converged: residual <= config.tol,
        objective_trace: trace,
    };
    if fit.converged {
        Ok(fit)
    } else {
        Err(Error::NonConvergence {
            last: Box::new(fit),
        })
    }
}

/// Options of the cross-validated choice of `gamma_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_len: usize,
    /// Smallest grid value as a fraction of [`null_gamma`].
    pub min_ratio: f64,
    /// KKT tolerance of the fold fits along the path.
    pub path_tol: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_len: 20,
            min_ratio: 0.05,
            path_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGamma {
    pub gamma: f64,
    /// Decreasing grid of candidate levels.
    pub grid: Vec<f64>,
    /// Cross-validated partial log-likelihood per grid point (higher is better).
    pub scores: Vec<f64>,
}

fn fit_or_last(
    cohort: &Cohort,
    gamma: f64,
    config: &LassoConfig,
    start: &[f64],
) -> Result<Vec<f64>> {
    match fit_lasso_from(cohort, gamma, None, config, start) {
        Ok(fit) => Ok(fit.beta_hat),
        Err(Error::NonConvergence { last }) => Ok(last.beta_hat),
        Err(e) => Err(e),
    }
}

/// Chooses `gamma_n` on a log grid below [`null_gamma`] by K-fold
/// cross-validated partial likelihood: fold `k` scores
/// `L(beta_{-k}) - L_{-k}(beta_{-k})`, with `L` the unnormalised log partial
/// likelihood of the full cohort and `L_{-k}` that of the training part.
pub fn cv_gamma<R: Rng + ?Sized>(
    cohort: &Cohort,
    config: &LassoConfig,
    options: &CvOptions,
    rng: &mut R,
) -> Result<CvGamma> {
    let n = cohort.n();
    if options.folds < 2 || options.folds > n {
        return Err(Error::input(format!(
            "need 2 <= folds <= n, got {} folds for n = {n}",
            options.folds
        )));
    }
    if options.grid_len == 0 || !(options.min_ratio > 0.0 && options.min_ratio < 1.0) {
        return Err(Error::input(
            "cv grid needs at least one point and 0 < min_ratio < 1",
        ));
    }
    let top = null_gamma(cohort);
    if !(top > 0.0) {
        return Err(Error::input(
            "cannot cross-validate gamma_n: the null gradient vanishes",
        ));
    }
    let grid: Vec<f64> = (0..options.grid_len)
        .map(|k| {
            let frac = if options.grid_len == 1 {
                0.0
            } else {
                k as f64 / (options.grid_len - 1) as f64
            };
            top * options.min_ratio.powf(frac)
        })
        .collect();

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut fold_of = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        fold_of[i] = k % options.folds;
    }
    let path_config = LassoConfig {
        tol: options.path_tol,
        ..config.clone()
    };
    let full = PartialLikelihood::new(cohort);
    let mut scores = vec![0.0; grid.len()];
    for fold in 0..options.folds {
        let train_rows: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let train = cohort.subset(&train_rows)?;
        let train_lik = PartialLikelihood::new(&train);
        let mut beta = vec![0.0; cohort.p()];
        for (score, &gamma) in scores.iter_mut().zip(&grid) {
            beta = fit_or_last(&train, gamma, &path_config, &beta)?;
            let eta_full = cohort.linear_predictor(&beta)?;
            let eta_train = train.linear_predictor(&beta)?;
            *score += full.log_lik_sum(&eta_full) - train_lik.log_lik_sum(&eta_train);
        }
    }
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |best, (k, s)| if *s > scores[best] { k } else { best });
    Ok(CvGamma {
        gamma: grid[best],
        grid,
        scores,
    })
}
