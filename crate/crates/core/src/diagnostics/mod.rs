//! Normality diagnostics for simulated totals.

mod normal;
mod rates;
mod shapiro;
mod wasserstein;

pub use normal::{normal_cdf, normal_cdf_integral, normal_pdf, normal_quantile, normal_sf, normal_sf_integral};
pub use rates::{
    association_check, log_log_fit, rate_comparison, rate_exponent, variance_rate_curve, AssociationReport, LogLogFit, RateCurve,
};
pub use shapiro::{shapiro_wilk, SWResult};
pub use wasserstein::{standardize, w1_of_totals, w1_to_standard_normal, Standardization, W1Result};
