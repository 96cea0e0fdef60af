//! Explicit normal-approximation error bounds: the local-dependence bound,
//! the four-term bound for positively associated lattice fields, and its
//! behaviour as the block side grows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDepParams {
    /// Largest dependency-neighborhood size.
    pub d: f64,
    pub sigma: f64,
    /// `Σ E|X_i|³`.
    pub sum3: f64,
    /// `Σ E X_i⁴`.
    pub sum4: f64,
}

/// `D² sum3/σ³ + √28 D^{3/2} √sum4 / (√π σ²)`.
pub fn local_dep_bound(p: &LocalDepParams) -> Result<f64> {
    if !(p.sigma > 0.0 && p.sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {}", p.sigma)));
    }
    if !(p.d >= 1.0 && p.d.is_finite()) {
        return Err(Error::invalid(format!("D must be at least 1, got {}", p.d)));
    }
    if !(p.sum3 >= 0.0 && p.sum3.is_finite() && p.sum4 >= 0.0 && p.sum4.is_finite()) {
        return Err(Error::invalid("moment sums must be finite and nonnegative"));
    }
    Ok(p.d * p.d * p.sum3 / p.sigma.powi(3) + 28f64.sqrt() * p.d.powf(1.5) * p.sum4.sqrt() / (PI.sqrt() * p.sigma * p.sigma))
}

/// Largest `λ/r` accepted by [`mu_nu`]; beyond it `e^{λ/r}` overflows.
pub const MAX_LAMBDA_OVER_R: f64 = 700.0;

/// `μ = e^{2λ/r}/(e^{λ/r} - 1)²` and `ν = e^{λ/r}/(e^{λ/r} - 1)²`.
pub fn mu_nu(lambda: f64, r_mu_nu: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda.is_finite() && r_mu_nu > 0.0 && r_mu_nu.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda and r must be positive, got lambda {lambda} and r {r_mu_nu}"
        )));
    }
    let x = lambda / r_mu_nu;
    if x > MAX_LAMBDA_OVER_R {
        return Err(Error::invalid(format!("lambda/r = {x} overflows e^(lambda/r)")));
    }
    // divided through by e^{2x} so nothing overflows
    let denom = libm::expm1(-x).powi(2);
    let mu = 1.0 / denom;
    let nu = (-x).exp() / denom;
    if !(mu.is_finite() && nu.is_finite() && nu > 0.0) {
        return Err(Error::NonFiniteConstant("mu/nu"));
    }
    Ok((mu, nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssocBoundParams {
    pub d: u32,
    /// Uniform bound on the fourth-moment norm.
    pub m: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k: f64,
    /// The `r` inside `μ_λ` and `ν_λ`.
    pub r_mu_nu: f64,
    /// Block side.
    pub n: f64,
}

impl Default for AssocBoundParams {
    fn default() -> Self {
        Self {
            d: 2,
            m: 1.0,
            kappa: 1.0,
            lambda: 0.15,
            gamma: 1.0,
            k: 1.0,
            r_mu_nu: 1.0,
            n: 100.0,
        }
    }
}

impl AssocBoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        for (name, v) in [
            ("M", self.m),
            ("kappa", self.kappa),
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("K", self.k),
            ("r_mu_nu", self.r_mu_nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.n >= 2.0 && self.n.is_finite()) {
            return Err(Error::invalid(format!("n must be at least 2, got {}", self.n)));
        }
        Ok(())
    }

    pub fn with_n(&self, n: f64) -> Self {
        Self { n, ..*self }
    }
}

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteConstant(name))
    }
}

/// `(4μ + 2ν)^d - (2ν)^d`.
fn spread(mu: f64, nu: f64, d: u32) -> f64 {
    let d = d as i32;
    (4.0 * mu + 2.0 * nu).powi(d) - (2.0 * nu).powi(d)
}

fn theta_from(p: &AssocBoundParams, mu: f64, nu: f64) -> f64 {
    let d = f64::from(p.d);
    let inner = (2.0 * p.gamma).sqrt() * p.kappa.cbrt() * spread(mu, nu, p.d) / (18f64.powf(d + 1.0) * PI.sqrt() * d * p.m);
    p.lambda / 3.0 * inner.powf(1.0 / (2.0 * d + 1.0))
}

pub fn theta(p: &AssocBoundParams) -> Result<f64> {
    p.validate()?;
    let (mu, nu) = mu_nu(p.lambda, p.r_mu_nu)?;
    finite("theta", theta_from(p, mu, nu))
}

/// `θ` with `(μ, ν)` supplied directly rather than derived from `λ`.
pub fn theta_with_mu_nu(p: &AssocBoundParams, mu: f64, nu: f64) -> Result<f64> {
    p.validate()?;
    finite("theta", theta_from(p, mu, nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub mu: f64,
    pub nu: f64,
    pub theta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    /// `ln T3` and `ln T4`, meaningful even where the terms underflow.
    pub log_t3: f64,
    pub log_t4: f64,
    pub total: f64,
}

pub fn assoc_bound(p: &AssocBoundParams) -> Result<BoundBreakdown> {
    p.validate()?;
    let d = f64::from(p.d);
    let (mu, nu) = mu_nu(p.lambda, p.r_mu_nu)?;
    let theta = finite("theta", theta_from(p, mu, nu))?;
    let b = finite("(4mu+2nu)^d-(2nu)^d", spread(mu, nu, p.d))?;
    let e = 2.0 * d + 1.0;
    let ln_c1_head =
        (9f64.ln() + d * 36f64.ln() + (4.0 * d + 3.0) * p.m.ln() + 2.0 * d * b.ln() - (2.0 * d + 1.5) * p.gamma.ln() - d * PI.ln()) / e;
    let c1 = finite(
        "C1",
        ln_c1_head.exp() * ((2.0 * d).powf(-2.0 * d / e) + 2.0 * (2.0 * d).powf(1.0 / e)),
    )?;
    let c2 = finite(
        "C2",
        3.0 * 6f64.powf(d) * p.kappa.cbrt() * p.m * p.m * theta.powf(4.0 * d / 3.0) / (PI.sqrt() * p.gamma),
    )?;
    let c3 = finite("C3", 2f64.powf(d + 1.0) * p.kappa.powf(2.0 / 3.0) * p.m / p.gamma.sqrt())?;

    let n = p.n;
    let rate = d / (4.0 * d + 2.0);
    let n_rate = n.powf(rate);
    let t1 = finite(
        "T1",
        (28f64.sqrt() * p.m * p.m * (2.0 * p.k).powf(1.5 * d) / (p.gamma * PI.sqrt()) + c1) / n_rate,
    )?;
    let t2 = finite(
        "T2",
        p.m.powi(3) * (2.0 * p.k).powf(2.0 * d) / (p.gamma.powf(1.5) * n.powf(d / 6.0 - 1.0 / (6.0 * d + 3.0))),
    )?;
    let log_t3 = finite("T3", c2.ln() + d * (4.0 * d + 1.0) / (6.0 * d + 3.0) * n.ln() - theta * n_rate)?;
    let log_t4 = finite("T4", c3.ln() + 7.0 * d / 6.0 * n.ln() - 2.0 * theta * n_rate)?;
    let (t3, t4) = (log_t3.exp(), log_t4.exp());
    let total = finite("total", t1 + t2 + t3 + t4)?;
    Ok(BoundBreakdown {
        mu,
        nu,
        theta,
        c1,
        c2,
        c3,
        t1,
        t2,
        t3,
        t4,
        log_t3,
        log_t4,
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub points: Vec<(f64, BoundBreakdown)>,
    /// First `n` from which on `T1 > T2 + T3 + T4` for every later entry.
    pub dominance_onset: Option<f64>,
}

pub fn bound_curve(p: &AssocBoundParams, n_list: &[f64]) -> Result<BoundCurve> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n list must be strictly increasing"));
    }
    let points = n_list
        .iter()
        .map(|&n| assoc_bound(&p.with_n(n)).map(|b| (n, b)))
        .collect::<Result<Vec<_>>>()?;
    let mut onset = None;
    for (n, b) in points.iter().rev() {
        if b.t1 > b.t2 + b.t3 + b.t4 {
            onset = Some(*n);
        } else {
            break;
        }
    }
    Ok(BoundCurve {
        points,
        dominance_onset: onset,
    })
}

/// `count` points spaced evenly in `log n` from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(Error::invalid("need 0 < lo < hi and at least two points"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect();
    out[0] = lo;
    out[count - 1] = hi;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub d: u32,
    pub k: f64,
    pub n: f64,
    /// `(2/3)(4d - 1 - 1/d)/(4d + 2)`, from the neighborhood assumption.
    pub assumption_exponent: f64,
    pub assumption_threshold: f64,
    /// `d/(4d + 2)`, from the rate statement.
    pub rate_exponent: f64,
    pub rate_threshold: f64,
    pub consistent: bool,
}

/// The two neighborhood thresholds `K n^e` appearing in the assumptions and
/// in the rate statement. They differ for every `d ≥ 1`.
pub fn threshold_report(p: &AssocBoundParams) -> Result<ThresholdReport> {
    p.validate()?;
    let d = f64::from(p.d);
    let assumption_exponent = 2.0 / 3.0 * (4.0 * d - 1.0 - 1.0 / d) / (4.0 * d + 2.0);
    let rate_exponent = d / (4.0 * d + 2.0);
    Ok(ThresholdReport {
        d: p.d,
        k: p.k,
        n: p.n,
        assumption_exponent,
        assumption_threshold: p.k * p.n.powf(assumption_exponent),
        rate_exponent,
        rate_threshold: p.k * p.n.powf(rate_exponent),
        consistent: (assumption_exponent - rate_exponent).abs() < 1e-15,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn local_dep_examples() {
        let zero = LocalDepParams {
            d: 3.0,
            sigma: 2.0,
            sum3: 0.0,
            sum4: 0.0,
        };
        assert_eq!(local_dep_bound(&zero).unwrap(), 0.0);
        let unit = LocalDepParams {
            d: 1.0,
            sigma: 1.0,
            sum3: 1.0,
            sum4: 1.0,
        };
        assert!((local_dep_bound(&unit).unwrap() - 3.985_410_660_720_923).abs() < 1e-14);
        assert!(local_dep_bound(&LocalDepParams { sigma: 0.0, ..unit }).is_err());
    }

    #[test]
    fn local_dep_homogeneity() {
        let only3 = LocalDepParams {
            d: 2.0,
            sigma: 1.3,
            sum3: 0.7,
            sum4: 0.0,
        };
        let only4 = LocalDepParams {
            sum3: 0.0,
            sum4: 2.2,
            ..only3
        };
        let b3 = local_dep_bound(&only3).unwrap();
        let b4 = local_dep_bound(&only4).unwrap();
        assert!(rel(local_dep_bound(&LocalDepParams { d: 4.0, ..only3 }).unwrap(), 4.0 * b3) < 1e-15);
        assert!(rel(local_dep_bound(&LocalDepParams { d: 4.0, ..only4 }).unwrap(), 2f64.powf(1.5) * b4) < 1e-15);
    }

    #[test]
    fn mu_nu_examples() {
        let (mu, nu) = mu_nu(2f64.ln(), 1.0).unwrap();
        assert!(rel(mu, 4.0) < 1e-15 && rel(nu, 2.0) < 1e-15);
        let (mu, nu) = mu_nu(10.0, 1.0).unwrap();
        assert!(mu < 1.01 && nu < 0.01);
        assert!(mu_nu(701.0, 1.0).is_err());
        assert!(mu_nu(0.0, 1.0).is_err());
        assert!(mu_nu(1.0, -1.0).is_err());
    }

    #[test]
    fn theta_spread_and_scaling() {
        assert!(rel(spread(4.0, 2.0, 1), 16.0) < 1e-15);
        let p = AssocBoundParams {
            d: 1,
            lambda: 2f64.ln(),
            ..AssocBoundParams::default()
        };
        let a = theta_with_mu_nu(&p, 4.0, 2.0).unwrap();
        let b = theta_with_mu_nu(
            &AssocBoundParams {
                lambda: 2.0 * p.lambda,
                ..p
            },
            4.0,
            2.0,
        )
        .unwrap();
        assert!(rel(b, 2.0 * a) < 1e-15);
        assert!(rel(theta(&p).unwrap(), a) < 1e-14);
    }

    #[test]
    fn c3_closed_form() {
        let b = assoc_bound(&AssocBoundParams::default()).unwrap();
        assert!(rel(b.c3, 8.0) < 1e-15);
    }

    #[test]
    fn t1_power_law() {
        let p = AssocBoundParams::default();
        let a = assoc_bound(&p).unwrap();
        let b = assoc_bound(&p.with_n(1000.0)).unwrap();
        assert!(rel(b.t1 / a.t1, 10f64.powf(-0.2)) < 1e-14);
    }

    #[test]
    fn total_is_sum() {
        let b = assoc_bound(&AssocBoundParams::default()).unwrap();
        assert!(rel(b.total, b.t1 + b.t2 + b.t3 + b.t4) < 1e-15);
        assert!(rel(b.t3, b.log_t3.exp()) < 1e-15);
    }

    #[test]
    fn thresholds() {
        let r = threshold_report(&AssocBoundParams::default()).unwrap();
        assert!((r.assumption_exponent - 13.0 / 30.0).abs() < 1e-15);
        assert!(rel(r.assumption_threshold, 100f64.powf(13.0 / 30.0)) < 1e-15);
        assert_eq!(r.rate_exponent, 0.2);
        assert!(rel(r.rate_threshold, 100f64.powf(0.2)) < 1e-15);
        assert!(!r.consistent);
    }

    #[test]
    fn invalid_params() {
        let p = AssocBoundParams::default();
        assert!(assoc_bound(&AssocBoundParams { n: 1.0, ..p }).is_err());
        assert!(assoc_bound(&AssocBoundParams { gamma: 0.0, ..p }).is_err());
        assert!(assoc_bound(&AssocBoundParams { d: 0, ..p }).is_err());
        assert!(bound_curve(&p, &[10.0, 5.0]).is_err());
    }
}
