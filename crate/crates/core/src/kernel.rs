//! Kernel estimator of the baseline hazard (smoothed Breslow increments)
//! with a cross-validated bandwidth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{l2_norm_sq, Cohort, Hazard};

/// `K(u) = 0.75 (1 - u^2) 1{|u| <= 1}`.
pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// `alpha(t) = (1/h) sum_i w_i K((t - X_i)/h)` with Breslow weights
/// `w_i = delta_i / sum_j e^{beta'Z_j} 1{X_j >= X_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHazard {
    pub bandwidth: f64,
    /// `(X_i, w_i)` sorted by time.
    pub event_times_weights: Vec<(f64, f64)>,
}

/// Breslow increments `delta_i / sum_j e^{beta'Z_j} 1{X_j >= X_i}` in subject order.
pub fn breslow_weights(cohort: &Cohort, beta: &[f64]) -> Result<Vec<f64>> {
    let risks = cohort.relative_risks(beta)?;
    Ok(risk_set_weights(cohort, &risks))
}

/// `delta_i / sum_j r_j 1{X_j >= X_i}` for arbitrary per-subject risks `r`.
fn risk_set_weights(cohort: &Cohort, risks: &[f64]) -> Vec<f64> {
    let times = cohort.times();
    let mut order: Vec<usize> = (0..cohort.n()).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut weights = vec![0.0; cohort.n()];
    let mut acc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            acc += risks[order[end]];
            end += 1;
        }
        for &i in &order[k..end] {
            if cohort.is_event(i) {
                weights[i] = 1.0 / acc;
            }
        }
        k = end;
    }
    weights
}

impl KernelHazard {
    pub fn new(cohort: &Cohort, beta: &[f64], bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::input(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let weights = breslow_weights(cohort, beta)?;
        Ok(Self::from_weights(cohort, &weights, bandwidth))
    }

    fn from_weights(cohort: &Cohort, weights: &[f64], bandwidth: f64) -> Self {
        let mut event_times_weights: Vec<(f64, f64)> = cohort
            .times()
            .iter()
            .copied()
            .zip(weights.iter().copied())
            .collect();
        event_times_weights.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            bandwidth,
            event_times_weights,
        }
    }

    /// Total mass `sum_i w_i`, the Breslow estimate of the cumulative hazard at `tau`.
    pub fn total_weight(&self) -> f64 {
        self.event_times_weights.iter().map(|(_, w)| w).sum()
    }
}

impl Hazard for KernelHazard {
    fn value(&self, t: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self
            .event_times_weights
            .partition_point(|(x, _)| *x < t - h);
        let hi = self
            .event_times_weights
            .partition_point(|(x, _)| *x <= t + h);
        self.event_times_weights[lo..hi]
            .iter()
            .map(|&(x, w)| w * epanechnikov((t - x) / h))
            .sum::<f64>()
            / h
    }
}

pub fn kernel_estimate(cohort: &Cohort, beta: &[f64], h: f64, t: f64) -> Result<f64> {
    Ok(KernelHazard::new(cohort, beta, h)?.value(t))
}

/// 30-point (by default) log-spaced grid from `tau/n` to `tau/2`.
pub fn default_bandwidth_grid(cohort: &Cohort, points: usize) -> Vec<f64> {
    let lo = cohort.tau() / cohort.n() as f64;
    let hi = cohort.tau() / 2.0;
    if points <= 1 {
        return vec![hi];
    }
    (0..points)
        .map(|k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64))
        .collect()
}

/// Risk-set size used to normalise the increments in the CV cross term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvRiskSet {
    /// `Ybar(t) = sum_j 1{X_j >= t}`.
    #[default]
    AtRisk,
    /// `sum_j e^{beta'Z_j} 1{X_j >= t}`, matching the estimator's own weights.
    Weighted,
}

/// Cross-validation criterion over a bandwidth grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvBandwidth {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub criterion: Vec<f64>,
}

/// Increments `Delta N(X_i) / Ybar(X_i)` sorted by time and restricted to events.
fn increments(cohort: &Cohort, breslow: &[f64], risk_set: CvRiskSet) -> Vec<(f64, f64)> {
    let weights = match risk_set {
        CvRiskSet::AtRisk => risk_set_weights(cohort, &vec![1.0; cohort.n()]),
        CvRiskSet::Weighted => breslow.to_vec(),
    };
    let mut out: Vec<(f64, f64)> = cohort
        .times()
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&x, &w)| (x, w))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `sum_{i != j} (1/h) K((X_i - X_j)/h) v_i v_j` over time-sorted `(X, v)` pairs.
fn cross_term(increments: &[(f64, f64)], h: f64) -> f64 {
    let mut total = 0.0;
    for (a, &(xa, va)) in increments.iter().enumerate() {
        for &(xb, vb) in increments[a + 1..].iter() {
            if xb - xa > h {
                break;
            }
            total += epanechnikov((xa - xb) / h) * va * vb;
        }
    }
    2.0 * total / h
}

/// CV criterion `int_0^tau alpha_h^2 - 2 sum_{i != j} (1/h) K((X_i - X_j)/h)
/// dN(X_i)/Ybar(X_i) dN(X_j)/Ybar(X_j)` for one bandwidth.
pub fn cv_criterion(cohort: &Cohort, beta: &[f64], h: f64) -> Result<f64> {
    let fit = KernelHazard::new(cohort, beta, h)?;
    let weights = breslow_weights(cohort, beta)?;
    let inc = increments(cohort, &weights, CvRiskSet::AtRisk);
    Ok(l2_norm_sq(&fit, cohort.tau()) - 2.0 * cross_term(&inc, h))
}

/// Grid argmin of [`cv_criterion`]; ties go to the first grid point.
pub fn cv_bandwidth(cohort: &Cohort, beta: &[f64], grid: &[f64]) -> Result<CvBandwidth> {
    cv_bandwidth_with(cohort, beta, grid, CvRiskSet::AtRisk)
}

/// As [`cv_bandwidth`] with a choice of risk-set normalisation in the cross term.
pub fn cv_bandwidth_with(
    cohort: &Cohort,
    beta: &[f64],
    grid: &[f64],
    risk_set: CvRiskSet,
) -> Result<CvBandwidth> {
    if grid.is_empty() {
        return Err(Error::input("bandwidth grid is empty"));
    }
    if let Some(h) = grid.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::input(format!(
            "bandwidths must be positive, got {h}"
        )));
    }
    let weights = breslow_weights(cohort, beta)?;
    let inc = increments(cohort, &weights, risk_set);
    let tau = cohort.tau();
    let criterion: Vec<f64> = grid
        .iter()
        .map(|&h| {
            let fit = KernelHazard::from_weights(cohort, &weights, h);
            l2_norm_sq(&fit, tau) - 2.0 * cross_term(&inc, h)
        })
        .collect();
    let best = (0..grid.len()).fold(0, |b, k| if criterion[k] < criterion[b] { k } else { b });
    Ok(CvBandwidth {
        bandwidth: grid[best],
        grid: grid.to_vec(),
        criterion,
    })
}
