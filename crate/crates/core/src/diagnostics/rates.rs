use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimate::{DecayBin, DecayCurve};

/// Least-squares fit of `log value` on `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `None` with only two points.
    pub slope_se: Option<f64>,
    /// 95% t-interval for the slope.
    pub slope_ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub points: Vec<(usize, f64)>,
    pub fit: Option<LogLogFit>,
    /// Slope predicted by the normal-approximation rate (or 0 for the
    /// variance-rate curve).
    pub reference_slope: f64,
    /// Block sides whose value is zero.
    pub zero_values: Vec<usize>,
}

/// `d/(4d+2)`.
pub fn rate_exponent(d: u32) -> f64 {
    let d = f64::from(d);
    d / (4.0 * d + 2.0)
}

fn check_increasing(ns: impl Iterator<Item = usize>) -> Result<()> {
    let mut last = 0;
    for n in ns {
        if n == 0 || n <= last {
            return Err(Error::invalid("block sizes must be positive and strictly increasing"));
        }
        last = n;
    }
    Ok(())
}

pub fn log_log_fit(points: &[(usize, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::invalid("need at least two points for a log-log fit"));
    }
    if let Some(&(n, v)) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::invalid(format!("value at n = {n} must be positive and finite, got {v}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let (slope_se, slope_ci95) = if points.len() >= 3 {
        let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (ss / (k - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, k - 2.0)
            .map_err(|e| Error::invalid(e.to_string()))?
            .inverse_cdf(0.975);
        (Some(se), Some((slope - t * se, slope + t * se)))
    } else {
        (None, None)
    };
    Ok(LogLogFit {
        slope,
        intercept,
        slope_se,
        slope_ci95,
    })
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `σ_n²/n^d` per block side, `σ_n²` being the sample variance of the
/// totals.
pub fn variance_rate_curve(totals: &[(usize, Vec<f64>)], d: u32) -> Result<RateCurve> {
    check_increasing(totals.iter().map(|t| t.0))?;
    let mut points = Vec::with_capacity(totals.len());
    for (n, x) in totals {
        if x.len() < 2 {
            return Err(Error::TooFewReplicates {
                required: 2,
                found: x.len(),
            });
        }
        super::wasserstein::check_finite(x)?;
        points.push((*n, sample_var(x) / (*n as f64).powi(d as i32)));
    }
    let zero_values: Vec<usize> = points.iter().filter(|p| p.1 <= 0.0).map(|p| p.0).collect();
    let fit = if zero_values.is_empty() && points.len() >= 2 {
        Some(log_log_fit(&points)?)
    } else {
        None
    };
    Ok(RateCurve {
        points,
        fit,
        reference_slope: 0.0,
        zero_values,
    })
}

/// Log-log slope of W₁ against `n`, alongside the reference `-d/(4d+2)`.
pub fn rate_comparison(w1: &[(usize, f64)], d: u32) -> Result<RateCurve> {
    if w1.len() < 3 {
        return Err(Error::invalid(format!("need at least three (n, W1) points, got {}", w1.len())));
    }
    check_increasing(w1.iter().map(|p| p.0))?;
    let fit = log_log_fit(w1)?;
    Ok(RateCurve {
        points: w1.to_vec(),
        fit: Some(fit),
        reference_slope: -rate_exponent(d),
        zero_values: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub passed: bool,
    /// Bins whose covariance lies more than three standard errors below 0.
    pub offending: Vec<DecayBin>,
}

pub fn association_check(curve: &DecayCurve) -> AssociationReport {
    let offending: Vec<DecayBin> = curve.bins.iter().filter(|b| b.cov < -3.0 * b.se).copied().collect();
    AssociationReport {
        passed: offending.is_empty(),
        offending,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::CurveOptions;

    #[test]
    fn exact_power_law_slope() {
        let pts: Vec<(usize, f64)> = [8usize, 12, 16, 24, 32, 48, 64]
            .iter()
            .map(|&n| (n, 2.5 * (n as f64).powf(-0.2)))
            .collect();
        let c = rate_comparison(&pts, 2).unwrap();
        let fit = c.fit.unwrap();
        assert!((fit.slope + 0.2).abs() < 1e-10);
        assert!(fit.slope_se.unwrap() < 1e-10);
        assert_eq!(c.reference_slope, -0.2);
    }

    #[test]
    fn reference_exponents() {
        assert_eq!(rate_exponent(2), 0.2);
        assert!((rate_exponent(1) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rate_comparison_preconditions() {
        assert!(rate_comparison(&[(8, 0.1), (16, 0.09)], 2).is_err());
        assert!(rate_comparison(&[(8, 0.1), (16, 0.0), (32, 0.05)], 2).is_err());
        assert!(rate_comparison(&[(16, 0.1), (8, 0.09), (32, 0.05)], 2).is_err());
    }

    #[test]
    fn deterministic_totals_flagged() {
        let t = vec![(4usize, vec![5.0; 10]), (8, vec![9.0; 10])];
        let c = variance_rate_curve(&t, 2).unwrap();
        assert!(c.points.iter().all(|p| p.1 == 0.0));
        assert_eq!(c.zero_values, vec![4, 8]);
        assert!(c.fit.is_none());
    }

    #[test]
    fn variance_rate_needs_replicates() {
        assert!(matches!(
            variance_rate_curve(&[(4, vec![1.0])], 2),
            Err(Error::TooFewReplicates { .. })
        ));
    }

    fn curve(covs: &[(f64, f64)]) -> DecayCurve {
        DecayCurve {
            bins: covs
                .iter()
                .enumerate()
                .map(|(i, &(cov, se))| DecayBin {
                    r: i as f64 + 1.0,
                    cov,
                    se,
                    pairs: 4,
                })
                .collect(),
            subsampled: false,
            options: CurveOptions::default(),
        }
    }

    #[test]
    fn association() {
        assert!(association_check(&curve(&[(1.0, 0.1), (0.5, 0.1)])).passed);
        assert!(association_check(&curve(&[(0.01, 0.1), (-0.2, 0.1)])).passed);
        let bad = association_check(&curve(&[(-1.0, 0.1), (-0.5, 0.1), (0.1, 0.1)]));
        assert!(!bad.passed);
        assert_eq!(bad.offending.len(), 2);
        assert_eq!(bad.offending[1].r, 2.0);
    }
}
