use serde::{Deserialize, Serialize};

use super::normal::{normal_cdf, normal_cdf_integral, normal_quantile, normal_sf, normal_sf_integral};
use crate::error::{Error, Result};

/// How the samples were brought to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Standardization {
    /// The samples were used as given.
    AsGiven,
    SampleMoments {
        mean: f64,
        sd: f64,
    },
    External {
        mean: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1Result {
    pub distance: f64,
    pub n: usize,
    pub standardization: Standardization,
}

pub(crate) fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(x - mean)/sd` with the sample moments (divisor `R - 1`), or with an
/// externally supplied `(mean, sd)`.
pub fn standardize(x: &[f64], external: Option<(f64, f64)>) -> Result<(Vec<f64>, Standardization)> {
    check_finite(x)?;
    let (mean, sd, how) = match external {
        Some((mean, sd)) => {
            if x.is_empty() {
                return Err(Error::TooFewReplicates { required: 1, found: 0 });
            }
            (mean, sd, Standardization::External { mean, sd })
        }
        None => {
            if x.len() < 2 {
                return Err(Error::TooFewReplicates {
                    required: 2,
                    found: x.len(),
                });
            }
            let (mean, sd) = mean_sd(x);
            (mean, sd, Standardization::SampleMoments { mean, sd })
        }
    };
    if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(Error::ZeroVariance);
    }
    Ok((x.iter().map(|v| (v - mean) / sd).collect(), how))
}

/// `∫_a^b (Φ(t) - p) dt` for `a ≤ b`, evaluated from whichever tail keeps
/// the subtraction small.
fn signed_piece(a: f64, b: f64, p: f64) -> f64 {
    if p <= 0.5 {
        normal_cdf_integral(b) - normal_cdf_integral(a) - p * (b - a)
    } else {
        (1.0 - p) * (b - a) - (normal_sf_integral(a) - normal_sf_integral(b))
    }
}

/// `∫_a^b |Φ(t) - p| dt`, split where `Φ` crosses `p`.
fn abs_piece(a: f64, b: f64, p: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let below = |t: f64| if p <= 0.5 { normal_cdf(t) < p } else { normal_sf(t) > 1.0 - p };
    let (lo_below, hi_below) = (below(a), below(b));
    if !lo_below && !hi_below {
        signed_piece(a, b, p)
    } else if lo_below && hi_below {
        -signed_piece(a, b, p)
    } else {
        let q = normal_quantile(p).clamp(a, b);
        -signed_piece(a, q, p) + signed_piece(q, b, p)
    }
}

/// Exact `∫|F̂_n - Φ|` for the empirical distribution of `samples`.
pub fn w1_to_standard_normal(samples: &[f64]) -> Result<W1Result> {
    if samples.is_empty() {
        return Err(Error::TooFewReplicates { required: 1, found: 0 });
    }
    check_finite(samples)?;
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let mut total = normal_cdf_integral(x[0]) + normal_sf_integral(x[n - 1]);
    for k in 1..n {
        total += abs_piece(x[k - 1], x[k], k as f64 / n as f64);
    }
    Ok(W1Result {
        distance: total.max(0.0),
        n,
        standardization: Standardization::AsGiven,
    })
}

/// Standardizes raw totals, then measures their distance to `N(0, 1)`.
pub fn w1_of_totals(totals: &[f64], external: Option<(f64, f64)>) -> Result<W1Result> {
    let (z, how) = standardize(totals, external)?;
    let mut r = w1_to_standard_normal(&z)?;
    r.standardization = how;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let r = w1_to_standard_normal(&[0.0]).unwrap();
        assert!((r.distance - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn standardize_two_points() {
        let (z, how) = standardize(&[1.0, 3.0], None).unwrap();
        assert!((z[0] + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((z[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(
            how,
            Standardization::SampleMoments {
                mean: 2.0,
                sd: 2f64.sqrt()
            }
        );
        assert!(matches!(standardize(&[4.0, 4.0, 4.0], None), Err(Error::ZeroVariance)));
        assert!(standardize(&[4.0], None).is_err());
        let (z, _) = standardize(&[4.0], Some((3.0, 2.0))).unwrap();
        assert_eq!(z, vec![0.5]);
    }

    #[test]
    fn standardize_is_affine_invariant() {
        let x = [0.3, -1.2, 4.4, 2.0, 0.0];
        let y: Vec<f64> = x.iter().map(|v| 7.5 * v - 3.0).collect();
        let (a, _) = standardize(&x, None).unwrap();
        let (b, _) = standardize(&y, None).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            w1_to_standard_normal(&[0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(w1_to_standard_normal(&[]).is_err());
    }

    #[test]
    fn ties_and_permutations() {
        let a = w1_to_standard_normal(&[0.5, -0.2, 0.5, 1.0]).unwrap().distance;
        let b = w1_to_standard_normal(&[1.0, 0.5, 0.5, -0.2]).unwrap().distance;
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn quantile_grid_converges() {
        let mut last = f64::INFINITY;
        for &n in &[10usize, 100, 1000, 10_000] {
            let q: Vec<f64> = (1..=n).map(|i| normal_quantile((i as f64 - 0.5) / n as f64)).collect();
            let d = w1_to_standard_normal(&q).unwrap().distance;
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn far_tail_samples() {
        // all mass far out: distance ≈ |shift|
        let r = w1_to_standard_normal(&[30.0]).unwrap().distance;
        assert!((r - 30.0).abs() < 1e-12);
        let r = w1_to_standard_normal(&[-30.0, -30.0]).unwrap().distance;
        assert!((r - 30.0).abs() < 1e-12);
    }
}
