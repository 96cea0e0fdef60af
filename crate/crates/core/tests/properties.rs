use firecox::cox::{functional_f, run_replicates, PermanentalSpec, WeightFunction};
use firecox::diagnostics::{normal_quantile, standardize, w1_to_standard_normal};
use firecox::estimate::{cell_moments, covariance_curve, fit_l_sigma, CurveOptions, FitOptions, MomentSummary};
use firecox::lattice::{CountField, LatticeSpec, RegionMask};
use firecox::steinbound::{assoc_bound, mu_nu, AssocBoundParams};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

/// Adaptive Simpson quadrature of `|F_n - Φ|`, Φ taken from statrs.
fn w1_quadrature(samples: &[f64]) -> f64 {
    let phi = Normal::new(0.0, 1.0).unwrap();
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let f = |t: f64| {
        let k = x.partition_point(|&v| v <= t) as f64;
        (k / n - phi.cdf(t)).abs()
    };
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
        }
    }
    // integrate piece by piece between breakpoints where F_n jumps or crosses Φ
    let mut pts = vec![x[0] - 12.0];
    for (k, &v) in x.iter().enumerate() {
        let q = normal_quantile(k as f64 / n);
        if q.is_finite() {
            pts.push(q);
        }
        pts.push(v);
    }
    pts.push(x[x.len() - 1] + 12.0);
    pts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-14 {
            continue;
        }
        // nudge inside the piece so the jump discontinuities sit on the edges
        let (a2, b2) = (a + 1e-13 * (b - a), b - 1e-13 * (b - a));
        let (fa, fb, fm) = (f(a2), f(b2), f(0.5 * (a2 + b2)));
        let whole = (b2 - a2) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson(&f, a2, b2, fa, fm, fb, whole, 1e-11, 40);
    }
    total
}

fn samples(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 1..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_agrees_with_quadrature(x in samples(40)) {
        let exact = w1_to_standard_normal(&x).unwrap().distance;
        let quad = w1_quadrature(&x);
        prop_assert!((exact - quad).abs() < 1e-6, "{exact} vs {quad}");
    }

    #[test]
    fn w1_permutation_invariant(mut x in samples(60), seed in any::<u64>()) {
        let a = w1_to_standard_normal(&x).unwrap().distance;
        let n = x.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            x.swap(i, (s >> 33) as usize % (i + 1));
        }
        let b = w1_to_standard_normal(&x).unwrap().distance;
        prop_assert!((a - b).abs() < 1e-15);
        prop_assert!(a > 0.0);
    }

    #[test]
    fn standardize_affine(x in prop::collection::vec(-50.0f64..50.0, 3..30), a in 0.1f64..10.0, b in -100.0f64..100.0) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (zx, _) = standardize(&x, None).unwrap();
        let (zy, _) = standardize(&y, None).unwrap();
        for (p, q) in zx.iter().zip(&zy) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn bound_fields_positive(
        d in 1u32..4, m in 0.2f64..5.0, kappa in 0.2f64..5.0, lambda in 0.01f64..10.0,
        gamma in 0.2f64..5.0, k in 0.2f64..5.0, r in 0.2f64..5.0, n in 2.0f64..1e6,
    ) {
        let p = AssocBoundParams { d, m, kappa, lambda, gamma, k, r_mu_nu: r, n };
        let b = assoc_bound(&p).unwrap();
        for v in [b.mu, b.nu, b.theta, b.c1, b.c2, b.c3, b.t1, b.t2, b.t3, b.t4, b.total] {
            prop_assert!(v > 0.0 && v.is_finite());
        }
        prop_assert!((b.total - (b.t1 + b.t2 + b.t3 + b.t4)).abs() <= 1e-15 * b.total);
    }

    #[test]
    fn t1_scaled_by_rate_is_constant(d in 1u32..4, n1 in 2.0f64..1e6, n2 in 2.0f64..1e6) {
        let p = AssocBoundParams { d, ..AssocBoundParams::default() };
        let rate = f64::from(d) / (4.0 * f64::from(d) + 2.0);
        let a = assoc_bound(&p.with_n(n1)).unwrap().t1 * n1.powf(rate);
        let b = assoc_bound(&p.with_n(n2)).unwrap().t1 * n2.powf(rate);
        prop_assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn mu_nu_identities(lambda in 1e-3f64..50.0, r in 0.1f64..10.0) {
        let (mu, nu) = mu_nu(lambda, r).unwrap();
        let e = (lambda / r).exp();
        prop_assert!(((mu / nu) - e).abs() <= 1e-12 * e);
        prop_assert!(((mu - nu) - (e - 1.0) * nu).abs() <= 1e-12 * mu);
        prop_assert!(mu > nu && nu > 0.0);
    }

    #[test]
    fn fit_matches_means_exactly(
        cells in prop::collection::vec((0.01f64..50.0, 0.01f64..200.0), 1..40),
        cap in 1usize..80,
    ) {
        let n = cells.len();
        let m = MomentSummary { mean: cells.iter().map(|c| c.0).collect(), var: cells.iter().map(|c| c.1).collect(), replicates: 10 };
        let fit = fit_l_sigma(&m, &RegionMask::full(1, n), FitOptions { l_cap: cap, ..FitOptions::default() }).unwrap();
        for i in 0..n {
            let s: f64 = fit.sigma2.iter().map(|r| r[i]).sum();
            prop_assert!((s - m.mean[i]).abs() <= 1e-12 * m.mean[i]);
            let l = fit.cell_l[i] as f64;
            let two_s4 = 2.0 * fit.sigma2.iter().map(|r| r[i] * r[i]).sum::<f64>();
            prop_assert!((two_s4 - 2.0 * m.mean[i].powi(2) / l).abs() <= 1e-9 * two_s4);
            let raw = 2.0 * m.mean[i].powi(2) / m.var[i];
            if raw < cap as f64 && raw >= 1.0 {
                prop_assert!((two_s4 - m.var[i]).abs() <= m.var[i] / l + 1e-9);
            }
        }
    }

    #[test]
    fn curve_invariant_under_replicate_permutation(
        reps in prop::collection::vec(prop::collection::vec(0u32..9, 16), 3..8),
        seed in any::<u64>(),
    ) {
        let r = reps.len();
        let field = CountField::from_replicates(4, 4, (0..r as i64).collect(), reps).unwrap();
        let mut order: Vec<usize> = (0..r).collect();
        let mut s = seed;
        for i in (1..r).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let opts = CurveOptions { max_r: 3.0, ..CurveOptions::default() };
        match (covariance_curve(&field, None, opts), covariance_curve(&field.permuted(&order), None, opts)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.bins.len(), b.bins.len());
                for (x, y) in a.bins.iter().zip(&b.bins) {
                    prop_assert!((x.cov - y.cov).abs() <= 1e-12 * (1.0 + x.cov.abs()));
                    prop_assert_eq!(x.pairs, y.pairs);
                }
            }
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn moments_permutation_invariant(reps in prop::collection::vec(prop::collection::vec(0u32..20, 6), 2..10)) {
        let r = reps.len();
        let field = CountField::from_replicates(2, 3, (0..r as i64).collect(), reps).unwrap();
        let order: Vec<usize> = (0..r).rev().collect();
        let a = cell_moments(&field).unwrap();
        let b = cell_moments(&field.permuted(&order)).unwrap();
        for i in 0..6 {
            prop_assert!((a.mean[i] - b.mean[i]).abs() < 1e-12);
            prop_assert!((a.var[i] - b.var[i]).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_nonnegative_and_deterministic(
        l in 1usize..4, s2 in 0.05f64..3.0, lambda in 0.05f64..2.0, seed in any::<u64>(),
    ) {
        let lattice = LatticeSpec::grid(5, 6).unwrap();
        let mask = RegionMask::rectangle(5, 6, 1, 1, 3, 4);
        let spec = PermanentalSpec::homogeneous(lattice, mask.clone(), l, s2, lambda).unwrap();
        let g = WeightFunction::ones(&mask);
        let a = run_replicates(&spec, 6, seed, &g).unwrap();
        let b = run_replicates(&spec, 6, seed, &g).unwrap();
        prop_assert_eq!(&a.counts, &b.counts);
        prop_assert_eq!(&a.totals, &b.totals);
        for k in 0..6 {
            prop_assert_eq!(a.totals[k], functional_f(a.counts.replicate(k), &g));
            for i in 0..30 {
                if !mask.contains(i) {
                    prop_assert_eq!(a.counts.get(i, k), 0);
                }
            }
        }
    }
}
