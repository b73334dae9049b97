//! Right-censored cohorts, hazard functions and the norms built on the
//! at-risk processes `Y_i(t) = 1{X_i >= t}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of nodes of the uniform trapezoid grid used for integrals of
/// hazards that are not piecewise constant.
pub const QUADRATURE_POINTS: usize = 2048;

/// One subject: observed time `X_i`, event indicator `delta_i` and covariates `Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub status: bool,
    pub covariates: Vec<f64>,
}

/// An observed right-censored sample together with the study horizon `tau`.
///
/// Covariates are stored row-major (`n x p`). The horizon is fixed at
/// construction and every estimator reads it from here.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<f64>,
    p: usize,
    tau: f64,
}

impl Cohort {
    pub fn new(observations: Vec<Observation>, tau: f64) -> Result<Self> {
        let p = observations
            .first()
            .map(|o| o.covariates.len())
            .unwrap_or(0);
        let n = observations.len();
        let mut times = Vec::with_capacity(n);
        let mut status = Vec::with_capacity(n);
        let mut covariates = Vec::with_capacity(n * p);
        for obs in observations {
            if obs.covariates.len() != p {
                return Err(Error::Dimension {
                    context: "observation covariates",
                    expected: p,
                    got: obs.covariates.len(),
                });
            }
            times.push(obs.time);
            status.push(obs.status);
            covariates.extend_from_slice(&obs.covariates);
        }
        Self::from_columns(times, status, covariates, p, tau)
    }

    /// Builds a cohort from column data; `covariates` is row-major with `p` columns.
    pub fn from_columns(
        times: Vec<f64>,
        status: Vec<bool>,
        covariates: Vec<f64>,
        p: usize,
        tau: f64,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::input("a cohort needs at least one observation"));
        }
        if status.len() != n {
            return Err(Error::Dimension {
                context: "status vector",
                expected: n,
                got: status.len(),
            });
        }
        if covariates.len() != n * p {
            return Err(Error::Dimension {
                context: "covariate matrix",
                expected: n * p,
                got: covariates.len(),
            });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::input(format!(
                "tau must be positive and finite, got {tau}"
            )));
        }
        if let Some((i, t)) = times
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t >= 0.0))
        {
            return Err(Error::input(format!(
                "observation {i}: time must be finite and nonnegative, got {t}"
            )));
        }
        if let Some(i) = covariates.iter().position(|z| !z.is_finite()) {
            return Err(Error::input(format!(
                "observation {}: covariate {} is not finite",
                i / p.max(1),
                i % p.max(1) + 1
            )));
        }
        Ok(Self {
            times,
            status,
            covariates,
            p,
            tau,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    /// Row-major covariate matrix.
    pub fn covariate_matrix(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            time: self.times[i],
            status: self.status[i],
            covariates: self.covariates(i).to_vec(),
        }
    }

    /// Whether subject `i` contributes a jump of `N_i` on `[0, tau]`.
    pub fn is_event(&self, i: usize) -> bool {
        self.status[i] && self.times[i] <= self.tau
    }

    pub fn event_count(&self) -> usize {
        (0..self.n()).filter(|&i| self.is_event(i)).count()
    }

    /// Largest absolute covariate value; the empirical version of the bound `B`.
    pub fn max_abs_covariate(&self) -> f64 {
        self.covariates.iter().fold(0.0, |m, z| m.max(z.abs()))
    }

    /// The sub-cohort made of the listed rows, sharing `tau`.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut covariates = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            covariates.extend_from_slice(self.covariates(i));
        }
        Self::from_columns(
            rows.iter().map(|&i| self.times[i]).collect(),
            rows.iter().map(|&i| self.status[i]).collect(),
            covariates,
            self.p,
            self.tau,
        )
    }

    pub(crate) fn check_beta(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.p {
            return Err(Error::Dimension {
                context: "regression parameter",
                expected: self.p,
                got: beta.len(),
            });
        }
        Ok(())
    }

    /// Linear predictors `beta' Z_i`.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.check_beta(beta)?;
        let active: Vec<(usize, f64)> = beta
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, b)| *b != 0.0)
            .collect();
        Ok((0..self.n())
            .map(|i| {
                let row = self.covariates(i);
                active.iter().map(|&(j, b)| b * row[j]).sum()
            })
            .collect())
    }

    /// Relative risks `exp(beta' Z_i)`.
    pub fn relative_risks(&self, beta: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .linear_predictor(beta)?
            .into_iter()
            .map(f64::exp)
            .collect())
    }
}

/// A constant piece `value` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

/// A hazard-like function `t -> alpha(t)` evaluable on `[0, tau]`.
pub trait Hazard {
    fn value(&self, t: f64) -> f64;

    /// Exact piecewise-constant representation, when there is one. Outside
    /// the returned pieces the function is zero.
    fn pieces(&self) -> Option<Vec<Piece>> {
        None
    }

    /// Values of the function just inside the cell `[a, b]`, i.e. `(f(a+), f(b-))`.
    /// Quadrature cells never straddle a breakpoint of the function.
    fn cell_limits(&self, a: f64, b: f64) -> (f64, f64) {
        (self.value(a), self.value(b))
    }

    /// Jump locations; quadrature grids are refined to include them.
    fn breakpoints(&self) -> Vec<f64> {
        self.pieces()
            .map(|ps| ps.iter().flat_map(|p| [p.start, p.end]).collect())
            .unwrap_or_default()
    }
}

impl<H: Hazard + ?Sized> Hazard for &H {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }
    fn pieces(&self) -> Option<Vec<Piece>> {
        (**self).pieces()
    }
    fn cell_limits(&self, a: f64, b: f64) -> (f64, f64) {
        (**self).cell_limits(a, b)
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

/// The constant hazard `alpha(t) = c` on `[0, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantHazard {
    pub value: f64,
    pub tau: f64,
}

impl Hazard for ConstantHazard {
    fn value(&self, t: f64) -> f64 {
        if (0.0..self.tau).contains(&t) {
            self.value
        } else {
            0.0
        }
    }
    fn pieces(&self) -> Option<Vec<Piece>> {
        Some(vec![Piece {
            start: 0.0,
            end: self.tau,
            value: self.value,
        }])
    }
    fn cell_limits(&self, a: f64, b: f64) -> (f64, f64) {
        let v = self.value(0.5 * (a + b));
        (v, v)
    }
}

/// Wraps a closure as a smooth hazard.
#[derive(Clone, Copy)]
pub struct FnHazard<F>(pub F);

impl<F: Fn(f64) -> f64> Hazard for FnHazard<F> {
    fn value(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

/// Weibull baseline `alpha0(t) = a lambda^a t^(a-1)`, cumulative hazard `(lambda t)^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaseline {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullBaseline {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::input(format!(
                "Weibull parameters must be positive, got ({shape}, {scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        (self.scale * t.max(0.0)).powf(self.shape)
    }

    /// `sup_{[0, tau]} alpha0`; infinite for shapes below one.
    pub fn sup_norm(&self, tau: f64) -> f64 {
        if self.shape < 1.0 {
            f64::INFINITY
        } else {
            self.value(tau)
        }
    }
}

impl Hazard for WeibullBaseline {
    fn value(&self, t: f64) -> f64 {
        let a = self.shape;
        if t <= 0.0 {
            return if a < 1.0 {
                f64::INFINITY
            } else if a == 1.0 {
                self.scale
            } else {
                0.0
            };
        }
        a * self.scale.powf(a) * t.powf(a - 1.0)
    }
}

/// Pointwise difference `f - g`, used for integrated squared errors.
pub(crate) struct Difference<A, B>(pub A, pub B);

impl<A: Hazard, B: Hazard> Hazard for Difference<A, B> {
    fn value(&self, t: f64) -> f64 {
        self.0.value(t) - self.1.value(t)
    }
    fn cell_limits(&self, a: f64, b: f64) -> (f64, f64) {
        let (fa, fb) = self.0.cell_limits(a, b);
        let (ga, gb) = self.1.cell_limits(a, b);
        (fa - ga, fb - gb)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut out = self.0.breakpoints();
        out.extend(self.1.breakpoints());
        out
    }
}

/// The at-risk indicators `Y_i(t) = 1{X_i >= t}`.
pub fn at_risk(cohort: &Cohort, t: f64) -> Vec<bool> {
    cohort.times().iter().map(|&x| x >= t).collect()
}

/// Trapezoid rule on one cell. A non-finite endpoint value (an integrable
/// singularity of the integrand at that end) is replaced by the rectangle
/// rule at the finite end.
fn cell_rule(a: f64, b: f64, fa: f64, fb: f64) -> f64 {
    let w = b - a;
    match (fa.is_finite(), fb.is_finite()) {
        (true, true) => 0.5 * w * (fa + fb),
        (false, true) => w * fb,
        (true, false) => w * fa,
        (false, false) => w * (fa + fb),
    }
}

/// Uniform `QUADRATURE_POINTS` grid on `[0, tau]` refined with the jumps of the integrand.
pub(crate) struct CellGrid {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CellGrid {
    /// Cumulative trapezoid integrals of the square of `h` on `[0, tau]`.
    pub(crate) fn squared<H: Hazard>(h: &H, tau: f64) -> Self {
        let last = (QUADRATURE_POINTS - 1) as f64;
        let mut nodes: Vec<f64> = (0..QUADRATURE_POINTS)
            .map(|k| tau * k as f64 / last)
            .collect();
        nodes.extend(h.breakpoints().into_iter().filter(|b| *b > 0.0 && *b < tau));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let mut cumulative = Vec::with_capacity(nodes.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for w in nodes.windows(2) {
            let (fa, fb) = h.cell_limits(w[0], w[1]);
            acc += cell_rule(w[0], w[1], fa * fa, fb * fb);
            cumulative.push(acc);
        }
        Self { nodes, cumulative }
    }

    pub(crate) fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// `int_0^x h^2` for `x` in `[0, tau]`.
    pub(crate) fn integral_to<H: Hazard>(&self, h: &H, x: f64) -> f64 {
        let k = self.nodes.partition_point(|&t| t <= x).saturating_sub(1);
        let a = self.nodes[k];
        if x <= a || k + 1 == self.nodes.len() {
            return self.cumulative[k];
        }
        let (fa, fb) = h.cell_limits(a, x);
        self.cumulative[k] + cell_rule(a, x, fa * fa, fb * fb)
    }
}

/// Exact `int_0^x f^2` for a piecewise-constant function.
fn pieces_sq_to(pieces: &[Piece], x: f64) -> f64 {
    pieces
        .iter()
        .map(|p| p.value * p.value * (x.min(p.end) - p.start).max(0.0))
        .sum()
}

/// `(1/n) sum_i w_i int_0^{min(X_i, tau)} h(t)^2 dt`.
pub(crate) fn weighted_risk_integral_sq<H: Hazard>(cohort: &Cohort, weights: &[f64], h: &H) -> f64 {
    let tau = cohort.tau();
    let n = cohort.n() as f64;
    match h.pieces() {
        Some(pieces) => {
            cohort
                .times()
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * pieces_sq_to(&pieces, x.min(tau)))
                .sum::<f64>()
                / n
        }
        None => {
            let grid = CellGrid::squared(h, tau);
            cohort
                .times()
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * grid.integral_to(h, x.min(tau)))
                .sum::<f64>()
                / n
        }
    }
}

/// Empirical squared norm `(1/n) sum_i int_0^tau alpha^2 e^{beta'Z_i} Y_i(t) dt`.
pub fn rand_norm_sq<H: Hazard>(cohort: &Cohort, beta: &[f64], alpha: &H) -> Result<f64> {
    let weights = cohort.relative_risks(beta)?;
    Ok(weighted_risk_integral_sq(cohort, &weights, alpha))
}

/// `int_0^tau alpha^2 dt`.
pub fn l2_norm_sq<H: Hazard>(alpha: &H, tau: f64) -> f64 {
    match alpha.pieces() {
        Some(pieces) => pieces_sq_to(&pieces, tau),
        None => CellGrid::squared(alpha, tau).total(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cohort(times: &[f64], tau: f64) -> Cohort {
        let n = times.len();
        Cohort::from_columns(times.to_vec(), vec![true; n], vec![0.0; n], 1, tau).unwrap()
    }

    #[test]
    fn at_risk_definition() {
        let c = cohort(&[2.0, 5.0], 6.0);
        assert_eq!(at_risk(&c, 3.0), vec![false, true]);
        assert_eq!(at_risk(&c, 0.0), vec![true, true]);
        assert_eq!(at_risk(&c, 5.0), vec![false, true]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Cohort::from_columns(vec![], vec![], vec![], 1, 1.0).is_err());
        assert!(Cohort::from_columns(vec![-1.0], vec![true], vec![0.0], 1, 1.0).is_err());
        assert!(Cohort::from_columns(vec![1.0], vec![true], vec![0.0], 1, 0.0).is_err());
        let obs = vec![
            Observation {
                time: 1.0,
                status: true,
                covariates: vec![0.0, 1.0],
            },
            Observation {
                time: 2.0,
                status: false,
                covariates: vec![0.0],
            },
        ];
        assert!(matches!(
            Cohort::new(obs, 3.0),
            Err(Error::Dimension { .. })
        ));
        let c = cohort(&[1.0], 2.0);
        assert!(c.linear_predictor(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rand_norm_examples() {
        let tau = 2.0;
        let zero = ConstantHazard { value: 0.0, tau };
        let c = cohort(&[tau], tau);
        assert_eq!(rand_norm_sq(&c, &[0.0], &zero).unwrap(), 0.0);
        let one = ConstantHazard { value: 1.0, tau };
        assert_relative_eq!(rand_norm_sq(&c, &[0.0], &one).unwrap(), tau);

        let c2 = cohort(&[tau / 2.0, tau], tau);
        let k = 1.7;
        let alpha = ConstantHazard { value: k, tau };
        assert_relative_eq!(
            rand_norm_sq(&c2, &[0.0], &alpha).unwrap(),
            k * k * 0.75 * tau,
            max_relative = 1e-14
        );
        // The quadrature path agrees on the same function.
        let smooth = FnHazard(|_t: f64| k);
        assert_relative_eq!(
            rand_norm_sq(&c2, &[0.0], &smooth).unwrap(),
            k * k * 0.75 * tau,
            max_relative = 1e-12
        );
    }

    #[test]
    fn l2_norm_examples() {
        assert_relative_eq!(
            l2_norm_sq(
                &ConstantHazard {
                    value: 1.0,
                    tau: 2.0
                },
                2.0
            ),
            2.0
        );
        let w = WeibullBaseline::new(3.0, 4.0).unwrap();
        // (192 t^2)^2 integrates to 192^2 / 5 on [0, 1].
        assert_relative_eq!(
            l2_norm_sq(&w, 1.0),
            192.0f64.powi(2) / 5.0,
            max_relative = 1e-6
        );
    }

    #[test]
    fn weibull_cumulative_matches_quadrature() {
        for &(a, l) in &[(1.5, 1.0), (3.0, 4.0), (1.0, 2.0), (0.5, 2.0)] {
            let w = WeibullBaseline::new(a, l).unwrap();
            let t = 0.7;
            // Midpoint rule on a fine grid; the shape 0.5 singularity at zero is integrable.
            let m = 200_000;
            let h = t / m as f64;
            let q: f64 = (0..m).map(|k| w.value((k as f64 + 0.5) * h) * h).sum();
            assert_relative_eq!(q, w.cumulative(t), max_relative = 2e-3);
            assert!(w.value(t) >= 0.0);
        }
    }

    #[test]
    fn singular_endpoint_stays_finite() {
        let w = WeibullBaseline::new(0.5, 2.0).unwrap();
        assert!(w.value(0.0).is_infinite());
        assert!(l2_norm_sq(&w, 1.0).is_finite());
    }
}
