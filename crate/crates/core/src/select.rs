//! Least-squares contrast, histogram projection estimators of the baseline
//! hazard and penalized selection of the histogram resolution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{rand_norm_sq, Cohort, Hazard, Piece};

/// Regular histogram basis on `[0, tau)` with `2^level` bins, orthonormal in `L2([0, tau])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBasis {
    pub level: u32,
    pub tau: f64,
}

impl HistogramBasis {
    pub fn new(level: u32, tau: f64) -> Self {
        Self { level, tau }
    }

    pub fn dimension(&self) -> usize {
        1usize << self.level
    }

    /// `[j tau / D, (j+1) tau / D)` for the zero-based index `j`.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let d = self.dimension() as f64;
        (self.tau * j as f64 / d, self.tau * (j + 1) as f64 / d)
    }

    /// Common height `2^{m/2} / sqrt(tau)` of the basis functions.
    pub fn height(&self) -> f64 {
        (self.dimension() as f64 / self.tau).sqrt()
    }

    /// Bin containing `t`, if `t` lies in `[0, tau)`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if !(0.0..self.tau).contains(&t) {
            return None;
        }
        let d = self.dimension();
        let mut j = ((t / self.tau) * d as f64) as usize;
        j = j.min(d - 1);
        // Correct for rounding at the dyadic edges.
        while j > 0 && t < self.interval(j).0 {
            j -= 1;
        }
        while j + 1 < d && t >= self.interval(j).1 {
            j += 1;
        }
        Some(j)
    }

    /// `phi_j(t)`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        if self.index_of(t) == Some(j) {
            self.height()
        } else {
            0.0
        }
    }
}

/// `sum_j a_j phi_j`, piecewise constant on the dyadic bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramHazard {
    pub basis: HistogramBasis,
    pub coefficients: Vec<f64>,
}

impl HistogramHazard {
    pub fn zero(basis: HistogramBasis) -> Self {
        Self {
            basis,
            coefficients: vec![0.0; basis.dimension()],
        }
    }

    /// Height of the function on bin `j`.
    pub fn bin_value(&self, j: usize) -> f64 {
        self.coefficients[j] * self.basis.height()
    }

    pub fn sup_norm(&self) -> f64 {
        self.coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs())) * self.basis.height()
    }

    /// The same function expressed at level `level + 1`.
    pub fn refine(&self) -> Self {
        let basis = HistogramBasis::new(self.basis.level + 1, self.basis.tau);
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            basis,
            coefficients: self
                .coefficients
                .iter()
                .flat_map(|a| [a * scale, a * scale])
                .collect(),
        }
    }
}

impl Hazard for HistogramHazard {
    fn value(&self, t: f64) -> f64 {
        self.basis.index_of(t).map_or(0.0, |j| self.bin_value(j))
    }

    fn pieces(&self) -> Option<Vec<Piece>> {
        Some(
            (0..self.basis.dimension())
                .map(|j| {
                    let (start, end) = self.basis.interval(j);
                    Piece {
                        start,
                        end,
                        value: self.bin_value(j),
                    }
                })
                .collect(),
        )
    }

    fn cell_limits(&self, a: f64, b: f64) -> (f64, f64) {
        let v = self.value(0.5 * (a + b));
        (v, v)
    }
}

/// Least-squares contrast
/// `-(2/n) sum_i int alpha dN_i + (1/n) sum_i int alpha^2 e^{beta'Z_i} Y_i dt`.
pub fn contrast<H: Hazard>(cohort: &Cohort, alpha: &H, beta: &[f64]) -> Result<f64> {
    let n = cohort.n() as f64;
    let jumps: f64 = (0..cohort.n())
        .filter(|&i| cohort.is_event(i))
        .map(|i| alpha.value(cohort.times()[i]))
        .sum();
    Ok(-2.0 * jumps / n + rand_norm_sq(cohort, beta, alpha)?)
}

/// Random Gram matrix `(1/n) sum_i int phi_j phi_k e^{beta'Z_i} Y_i dt`; diagonal for histograms.
pub fn gram_matrix(cohort: &Cohort, beta: &[f64], basis: &HistogramBasis) -> Result<DMatrix<f64>> {
    let risks = cohort.relative_risks(beta)?;
    let d = basis.dimension();
    let tau = basis.tau;
    let width = tau / d as f64;
    // full[j]: total risk of subjects covering bin j entirely.
    let mut full_from = vec![0.0; d + 1];
    let mut diag = vec![0.0; d];
    for (&x, &r) in cohort.times().iter().zip(&risks) {
        let x = x.min(tau);
        match basis.index_of(x) {
            Some(j) => {
                full_from[j] += r;
                diag[j] += r * (x - basis.interval(j).0);
            }
            None => full_from[d] += r,
        }
    }
    let mut acc = 0.0;
    for j in (0..d).rev() {
        acc += full_from[j + 1];
        diag[j] += acc * width;
    }
    let scale = basis.height().powi(2) / cohort.n() as f64;
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        diag.into_iter().map(|v| v * scale),
    )))
}

/// `Gamma_m = ((1/n) sum_i int phi_j dN_i)_j`.
pub fn gamma_vector(cohort: &Cohort, basis: &HistogramBasis) -> Vec<f64> {
    let mut out = vec![0.0; basis.dimension()];
    let h = basis.height() / cohort.n() as f64;
    for i in (0..cohort.n()).filter(|&i| cohort.is_event(i)) {
        if let Some(j) = basis.index_of(cohort.times()[i]) {
            out[j] += h;
        }
    }
    out
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    if gram.nrows() == 0 {
        return 0.0;
    }
    let diagonal =
        (0..gram.nrows()).all(|j| (0..gram.ncols()).all(|k| j == k || gram[(j, k)] == 0.0));
    if diagonal {
        return gram.diagonal().min();
    }
    SymmetricEigen::new(gram.clone()).eigenvalues.min()
}

/// How the eigenvalue floor of the invertibility guard is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GuardRule {
    /// `f0_hat` taken as the smallest Gram diagonal entry at the current level,
    /// with the unknown `beta0` factors set to one.
    Practical,
    /// Threshold `max(f0_hat e^{-B|beta0|_1} e^{-B|beta0 - beta_hat|_1} / 6, 1/sqrt(n))`
    /// with user-supplied quantities.
    Theoretical {
        f0_hat: f64,
        b_bound: f64,
        beta0_l1: f64,
        beta_error_l1: f64,
    },
    /// No floor: the system is solved whenever the Gram matrix is positive definite.
    Off,
}

impl GuardRule {
    /// `(f0_hat, beta_factor)` for a given Gram matrix.
    fn inputs(&self, gram: &DMatrix<f64>) -> (f64, f64) {
        match *self {
            GuardRule::Practical => (gram.diagonal().min().max(0.0), 1.0),
            GuardRule::Theoretical {
                f0_hat,
                b_bound,
                beta0_l1,
                beta_error_l1,
            } => (
                f0_hat,
                (-b_bound * beta0_l1).exp() * (-b_bound * beta_error_l1).exp(),
            ),
            GuardRule::Off => (0.0, 0.0),
        }
    }

    fn check(&self, gram: &DMatrix<f64>, n: usize) -> GuardCheck {
        match self {
            GuardRule::Off => {
                let min_eigenvalue = min_eigenvalue(gram);
                GuardCheck {
                    passed: min_eigenvalue > 0.0,
                    min_eigenvalue,
                    threshold: 0.0,
                }
            }
            _ => {
                let (f0_hat, factor) = self.inputs(gram);
                invertibility_guard(gram, f0_hat, factor, n)
            }
        }
    }
}

/// Outcome of [`invertibility_guard`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardCheck {
    pub passed: bool,
    pub min_eigenvalue: f64,
    pub threshold: f64,
}

/// Passes iff `min Sp(G) >= max(f0_hat * beta_factor / 6, 1/sqrt(n))`.
pub fn invertibility_guard(
    gram: &DMatrix<f64>,
    f0_hat: f64,
    beta_factor: f64,
    n: usize,
) -> GuardCheck {
    let min_eigenvalue = min_eigenvalue(gram);
    let threshold = (f0_hat * beta_factor / 6.0).max(1.0 / (n as f64).sqrt());
    GuardCheck {
        passed: min_eigenvalue >= threshold,
        min_eigenvalue,
        threshold,
    }
}

/// Projection estimator at one level, or the zero function when the guard fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProjectionFit {
    Fitted {
        hazard: HistogramHazard,
        guard: GuardCheck,
    },
    GuardFailure {
        basis: HistogramBasis,
        guard: GuardCheck,
    },
}

impl ProjectionFit {
    /// The estimator: the fitted histogram, or zero on guard failure.
    pub fn hazard(&self) -> HistogramHazard {
        match self {
            ProjectionFit::Fitted { hazard, .. } => hazard.clone(),
            ProjectionFit::GuardFailure { basis, .. } => HistogramHazard::zero(*basis),
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, ProjectionFit::GuardFailure { .. })
    }
}

/// Minimiser of the contrast over the histogram space of level `level`:
/// `a_j = Gamma_j / G_jj`.
pub fn fit_projection(
    cohort: &Cohort,
    beta: &[f64],
    level: u32,
    guard: &GuardRule,
) -> Result<ProjectionFit> {
    let basis = HistogramBasis::new(level, cohort.tau());
    let gram = gram_matrix(cohort, beta, &basis)?;
    let check = guard.check(&gram, cohort.n());
    if !check.passed {
        return Ok(ProjectionFit::GuardFailure {
            basis,
            guard: check,
        });
    }
    let rhs = gamma_vector(cohort, &basis);
    let coefficients = rhs
        .iter()
        .zip(gram.diagonal().iter())
        .map(|(g, d)| g / d)
        .collect();
    Ok(ProjectionFit::Fitted {
        hazard: HistogramHazard {
            basis,
            coefficients,
        },
        guard: check,
    })
}

/// Solves `G A = Gamma` by Cholesky, without using the diagonal structure.
pub fn solve_gram_system(gram: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let chol = gram.clone().cholesky()?;
    Some(
        chol.solve(&DVector::from_column_slice(rhs))
            .iter()
            .copied()
            .collect(),
    )
}

/// `K0 (1 + sup_norm) 2^m / n`.
pub fn penalty(level: u32, sup_norm: f64, k0: f64, n: usize) -> f64 {
    k0 * (1.0 + sup_norm) * (1u64 << level) as f64 / n as f64
}

/// Largest level `floor(log(n / log n) / log 2)` of the model collection.
pub fn max_level(n: usize) -> Result<u32> {
    if n < 2 {
        return Err(Error::input("model selection needs n >= 2"));
    }
    let n = n as f64;
    Ok(((n / n.ln()).ln() / std::f64::consts::LN_2).floor() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNormPlugin {
    pub value: f64,
    /// The fit at the largest level failed its guard; `value` is then 0.
    pub guard_failed: bool,
}

/// Sup norm of the projection estimator at `max_level`, standing in for `||alpha0||_inf`.
pub fn sup_norm_plugin(
    cohort: &Cohort,
    beta: &[f64],
    max_level: u32,
    guard: &GuardRule,
) -> Result<SupNormPlugin> {
    Ok(match fit_projection(cohort, beta, max_level, guard)? {
        ProjectionFit::Fitted { hazard, .. } => SupNormPlugin {
            value: hazard.sup_norm(),
            guard_failed: false,
        },
        ProjectionFit::GuardFailure { .. } => SupNormPlugin {
            value: 0.0,
            guard_failed: true,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub k0: f64,
    pub guard: GuardRule,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            k0: 2.0,
            guard: GuardRule::Practical,
        }
    }
}

/// Diagnostics of the penalized selection over levels `0..=max_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub chosen_level: u32,
    /// `C_n(alpha_m) + pen(m)` per level; `None` where the guard failed.
    pub criterion_values: Vec<Option<f64>>,
    pub contrast_values: Vec<Option<f64>>,
    pub penalty_constant: f64,
    pub sup_norm_plugin: f64,
    pub plugin_guard_failed: bool,
    pub guard_failures: Vec<u32>,
    pub guard_rule: GuardRule,
    /// No event on `[0, tau]`: every coefficient is zero.
    pub no_events: bool,
}

/// Selected level and the corresponding fitted histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedHazard {
    pub selection: ModelSelection,
    pub hazard: HistogramHazard,
}

/// Penalized choice of the histogram level, ties going to the smaller level.
pub fn select_model(
    cohort: &Cohort,
    beta: &[f64],
    options: &SelectOptions,
) -> Result<SelectedHazard> {
    if !(options.k0 > 0.0) {
        return Err(Error::input(format!(
            "k0 must be positive, got {}",
            options.k0
        )));
    }
    cohort.check_beta(beta)?;
    let top = max_level(cohort.n())?;
    let plugin = sup_norm_plugin(cohort, beta, top, &options.guard)?;
    let mut criterion_values = Vec::new();
    let mut contrast_values = Vec::new();
    let mut guard_failures = Vec::new();
    let mut best: Option<(u32, f64, HistogramHazard)> = None;
    for level in 0..=top {
        match fit_projection(cohort, beta, level, &options.guard)? {
            ProjectionFit::Fitted { hazard, .. } => {
                let c = contrast(cohort, &hazard, beta)?;
                let value = c + penalty(level, plugin.value, options.k0, cohort.n());
                contrast_values.push(Some(c));
                criterion_values.push(Some(value));
                if best.as_ref().is_none_or(|(_, v, _)| value < *v) {
                    best = Some((level, value, hazard));
                }
            }
            ProjectionFit::GuardFailure { .. } => {
                guard_failures.push(level);
                contrast_values.push(None);
                criterion_values.push(None);
            }
        }
    }
    let mut selection = ModelSelection {
        chosen_level: 0,
        criterion_values,
        contrast_values,
        penalty_constant: options.k0,
        sup_norm_plugin: plugin.value,
        plugin_guard_failed: plugin.guard_failed,
        guard_failures,
        guard_rule: options.guard,
        no_events: cohort.event_count() == 0,
    };
    match best {
        Some((level, _, hazard)) => {
            selection.chosen_level = level;
            Ok(SelectedHazard { selection, hazard })
        }
        None => Err(Error::AllGuardsFailed {
            diagnostics: Box::new(selection),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    use crate::survival::{l2_norm_sq, ConstantHazard};

    fn cohort(times: &[f64], status: &[bool], tau: f64) -> Cohort {
        let n = times.len();
        Cohort::from_columns(times.to_vec(), status.to_vec(), vec![0.0; n], 1, tau).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        for level in 0..6 {
            let basis = HistogramBasis::new(level, 1.7);
            for j in 0..basis.dimension() {
                let (a, b) = basis.interval(j);
                assert_relative_eq!(basis.height().powi(2) * (b - a), 1.0, max_relative = 1e-12);
                assert_eq!(basis.index_of(0.5 * (a + b)), Some(j));
                assert_eq!(basis.index_of(a), Some(j));
            }
            assert_eq!(basis.index_of(1.7), None);
        }
    }

    #[test]
    fn gram_examples() {
        let tau = 2.0;
        let one = cohort(&[tau], &[false], tau);
        for level in 0..5 {
            let g = gram_matrix(&one, &[0.0], &HistogramBasis::new(level, tau)).unwrap();
            assert_relative_eq!(
                g,
                DMatrix::identity(1 << level, 1 << level),
                epsilon = 1e-14
            );
        }
        let two = cohort(&[tau / 2.0, tau], &[true, false], tau);
        let g = gram_matrix(&two, &[0.0], &HistogramBasis::new(1, tau)).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(g[(1, 1)], 0.5, epsilon = 1e-14);
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
    }

    #[test]
    fn gamma_vector_examples() {
        let tau = 1.0;
        let none = cohort(&[0.2, 0.5], &[false, false], tau);
        assert_eq!(
            gamma_vector(&none, &HistogramBasis::new(2, tau)),
            vec![0.0; 4]
        );
        let one = cohort(&[0.3], &[true], tau);
        let g = gamma_vector(&one, &HistogramBasis::new(1, tau));
        assert_relative_eq!(g[0], 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(g[1], 0.0);
        // An event at exactly tau is outside every half-open bin.
        let edge = cohort(&[tau, 0.1], &[true, true], tau);
        let basis = HistogramBasis::new(3, tau);
        let g = gamma_vector(&edge, &basis);
        let scaled: f64 = g.iter().map(|v| v / basis.height()).sum();
        assert_relative_eq!(scaled, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn single_subject_projection() {
        let c = cohort(&[0.25], &[true], 1.0);
        let fit = fit_projection(&c, &[0.0], 0, &GuardRule::Off).unwrap();
        let h = fit.hazard();
        assert_relative_eq!(h.coefficients[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(h.value(0.9), 4.0, epsilon = 1e-12);
        let plug = sup_norm_plugin(&c, &[0.0], 0, &GuardRule::Off).unwrap();
        assert_relative_eq!(plug.value, 4.0, epsilon = 1e-12);
        assert!(!plug.guard_failed);
        // G_11 = 1/4 sits below the 1/sqrt(n) = 1 floor of the practical guard.
        let guarded = fit_projection(&c, &[0.0], 0, &GuardRule::Practical).unwrap();
        assert!(guarded.is_failure());
        assert!(guarded.hazard().coefficients.iter().all(|a| *a == 0.0));
        let plug = sup_norm_plugin(&c, &[0.0], 0, &GuardRule::Practical).unwrap();
        assert!(plug.guard_failed);
        assert_eq!(plug.value, 0.0);
    }

    #[test]
    fn contrast_examples() {
        let tau = 3.0;
        let c = cohort(&[1.2], &[true], tau);
        assert_eq!(
            contrast(&c, &ConstantHazard { value: 0.0, tau }, &[0.0]).unwrap(),
            0.0
        );
        let k = 0.7;
        assert_relative_eq!(
            contrast(&c, &ConstantHazard { value: k, tau }, &[0.0]).unwrap(),
            -2.0 * k + k * k * 1.2,
            epsilon = 1e-14
        );
        // Minimiser over constants matches the level-0 projection: 1/X_1.
        let fit = fit_projection(&c, &[0.0], 0, &GuardRule::Off)
            .unwrap()
            .hazard();
        assert_relative_eq!(fit.value(0.0), 1.0 / 1.2, epsilon = 1e-12);
    }

    #[test]
    fn guard_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(invertibility_guard(&id, 1.0, 1.0, 100).passed);
        assert!(!invertibility_guard(&DMatrix::zeros(2, 2), 0.0, 1.0, 100).passed);
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.05]));
        let check = invertibility_guard(&g, 0.05, 1.0, 100);
        assert!(!check.passed);
        assert_relative_eq!(check.threshold, 0.1);
        // Non-diagonal input goes through the symmetric eigen-solver.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(min_eigenvalue(&m), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(0, 0.0, 1.0, 1), 1.0);
        assert_eq!(penalty(4, 1.5, 2.0, 50), 2.0 * penalty(3, 1.5, 2.0, 50));
        assert_relative_eq!(penalty(3, 3.0, 2.0, 100), 0.64, epsilon = 1e-15);
    }

    #[test]
    fn level_range() {
        assert_eq!(max_level(500).unwrap(), 6);
        assert_eq!(max_level(200).unwrap(), 5);
        assert_eq!(max_level(100).unwrap(), 4);
        assert_eq!(max_level(2).unwrap(), 1);
        assert!(max_level(1).is_err());
    }

    #[test]
    fn no_events_selects_level_zero() {
        let c = cohort(&[0.2, 0.6, 1.0], &[false, false, false], 1.0);
        let sel = select_model(&c, &[0.0], &SelectOptions::default()).unwrap();
        assert!(sel.selection.no_events);
        assert_eq!(sel.selection.chosen_level, 0);
        assert!(sel.hazard.coefficients.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn all_guards_failing_is_an_error() {
        // Nobody is at risk past 0.01, so every level has an empty bin.
        let c = cohort(&[0.001, 0.002, 0.003, 0.004], &[true; 4], 1.0);
        match select_model(&c, &[0.0], &SelectOptions::default()) {
            Err(Error::AllGuardsFailed { diagnostics }) => {
                assert_eq!(
                    diagnostics.guard_failures.len(),
                    diagnostics.criterion_values.len()
                );
            }
            other => panic!("expected guard failure, got {other:?}"),
        }
    }

    #[test]
    fn parseval_and_sup_connection() {
        let h = HistogramHazard {
            basis: HistogramBasis::new(2, 2.0),
            coefficients: vec![0.5, -1.0, 2.0, 0.0],
        };
        let sq: f64 = h.coefficients.iter().map(|a| a * a).sum();
        assert_relative_eq!(l2_norm_sq(&h, 2.0), sq, epsilon = 1e-12);
        let d = h.basis.dimension() as f64;
        assert!(h.sup_norm().powi(2) <= d / 2.0 * sq + 1e-12);
    }
}
