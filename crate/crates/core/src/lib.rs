//! Two-step estimation in the Cox model with possibly high-dimensional
//! covariates: an l1-penalized partial-likelihood estimate of the regression
//! parameter, then a penalized least-squares choice among histogram
//! estimators of the baseline hazard. A cross-validated kernel estimator
//! and a Monte Carlo harness are included for comparison.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cox;
pub mod error;
pub mod io;
pub mod kernel;
pub mod select;
pub mod sim;
pub mod survival;

pub use cox::{
    cv_gamma, default_gamma, fit_lasso, fit_lasso_from, null_gamma, partial_log_lik,
    partial_log_lik_grad, CoxFit, CvGamma, CvOptions, LassoConfig,
};
pub use error::{Error, Result};
pub use kernel::{
    cv_bandwidth, cv_bandwidth_with, epanechnikov, kernel_estimate, CvBandwidth, CvRiskSet,
    KernelHazard,
};
pub use select::{
    contrast, fit_projection, gamma_vector, gram_matrix, invertibility_guard, penalty,
    select_model, sup_norm_plugin, GuardRule, HistogramBasis, HistogramHazard, ModelSelection,
    ProjectionFit, SelectOptions, SelectedHazard,
};
pub use sim::{ise_rand, simulate_cohort, Horizon, Scenario, SimulatedCohort};
pub use survival::{
    at_risk, l2_norm_sq, rand_norm_sq, Cohort, ConstantHazard, FnHazard, Hazard, Observation,
    Piece, WeibullBaseline, QUADRATURE_POINTS,
};
