//! Comparisons against values computed independently in arbitrary precision
//! or by reference implementations (see `fixtures/generate.py`).

use firecox::diagnostics::{normal_cdf, shapiro_wilk, w1_to_standard_normal};
use firecox::steinbound::{assoc_bound, theta, AssocBoundParams};
use serde::Deserialize;

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn normal_cdf_matches_grid() {
    let text = fixture("normal_cdf.csv");
    let mut worst = 0.0f64;
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let (t, phi) = line.split_once(',').unwrap();
        let (t, phi): (f64, f64) = (t.parse().unwrap(), phi.parse().unwrap());
        worst = worst.max((normal_cdf(t) - phi).abs());
        rows += 1;
    }
    assert_eq!(rows, 10_000);
    assert!(worst <= 1e-12, "worst {worst:e}");
}

#[test]
fn normal_cdf_pinned() {
    assert!((normal_cdf(1.96) - 0.975_002_104_851_779_6).abs() < 1e-15);
}

#[derive(Deserialize)]
struct W1Case {
    samples: Vec<f64>,
    w1: f64,
}

#[derive(Deserialize)]
struct W1Oracle {
    pair_minus1_plus1: f64,
    cases: Vec<W1Case>,
}

#[test]
fn w1_matches_quadrature() {
    let o: W1Oracle = serde_json::from_str(&fixture("w1_oracle.json")).unwrap();
    assert_eq!(o.cases.len(), 100);
    for (i, c) in o.cases.iter().enumerate() {
        let got = w1_to_standard_normal(&c.samples).unwrap().distance;
        assert!((got - c.w1).abs() < 1e-6, "case {i} (n = {}): {got} vs {}", c.samples.len(), c.w1);
    }
    let pair = w1_to_standard_normal(&[-1.0, 1.0]).unwrap().distance;
    assert!((pair - o.pair_minus1_plus1).abs() < 1e-10);
    assert!((pair - 0.535_377_321_547_88).abs() < 1e-12);
}

#[derive(Deserialize)]
struct BoundParams {
    d: u32,
    m: f64,
    kappa: f64,
    lambda_: f64,
    gamma: f64,
    k: f64,
    r_mu_nu: f64,
    n: f64,
}

#[derive(Deserialize)]
struct Expected {
    mu: f64,
    nu: f64,
    theta: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    t1: f64,
    t2: f64,
    t3: f64,
    t4: f64,
    total: f64,
}

#[derive(Deserialize)]
struct BoundCase {
    params: BoundParams,
    expected: Expected,
}

#[derive(Deserialize)]
struct Pinned {
    default_n100: Expected,
    theta_d1_ln2: f64,
}

#[derive(Deserialize)]
struct BoundOracle {
    pinned: Pinned,
    cases: Vec<BoundCase>,
}

fn check_breakdown(p: &AssocBoundParams, e: &Expected, tol: f64) {
    let b = assoc_bound(p).unwrap();
    let pairs = [
        ("mu", b.mu, e.mu),
        ("nu", b.nu, e.nu),
        ("theta", b.theta, e.theta),
        ("C1", b.c1, e.c1),
        ("C2", b.c2, e.c2),
        ("C3", b.c3, e.c3),
        ("T1", b.t1, e.t1),
        ("T2", b.t2, e.t2),
        ("T3", b.t3, e.t3),
        ("T4", b.t4, e.t4),
        ("total", b.total, e.total),
    ];
    for (name, got, want) in pairs {
        let rel = ((got - want) / want).abs();
        assert!(rel <= tol, "{name}: {got} vs {want} (rel {rel:e}) at {p:?}");
    }
}

#[test]
fn bound_matches_high_precision() {
    let o: BoundOracle = serde_json::from_str(&fixture("bound_oracle.json")).unwrap();
    assert_eq!(o.cases.len(), 100);
    for c in &o.cases {
        let p = AssocBoundParams {
            d: c.params.d,
            m: c.params.m,
            kappa: c.params.kappa,
            lambda: c.params.lambda_,
            gamma: c.params.gamma,
            k: c.params.k,
            r_mu_nu: c.params.r_mu_nu,
            n: c.params.n,
        };
        check_breakdown(&p, &c.expected, 1e-12);
    }
    check_breakdown(&AssocBoundParams::default(), &o.pinned.default_n100, 1e-12);
    let p = AssocBoundParams {
        d: 1,
        lambda: 2f64.ln(),
        ..AssocBoundParams::default()
    };
    assert!(((theta(&p).unwrap() - o.pinned.theta_d1_ln2) / o.pinned.theta_d1_ln2).abs() < 1e-12);
}

#[test]
fn bound_regression_pins() {
    let b = assoc_bound(&AssocBoundParams::default()).unwrap();
    assert!((b.theta - 0.070_082_108_031_849_37).abs() < 1e-15);
    assert!((b.total / 301_477.277_041_191_06 - 1.0).abs() < 1e-12);
}

#[derive(Deserialize)]
struct SwCase {
    n: usize,
    kind: String,
    samples: Vec<f64>,
    w: f64,
    p: f64,
}

#[test]
fn shapiro_matches_reference() {
    let cases: Vec<SwCase> = serde_json::from_str(&fixture("shapiro_oracle.json")).unwrap();
    assert!(cases.len() >= 20);
    for c in &cases {
        let r = shapiro_wilk(&c.samples).unwrap();
        assert_eq!(r.n, c.n);
        assert!((r.w - c.w).abs() < 1e-4, "{} n={}: W {} vs {}", c.kind, c.n, r.w, c.w);
        assert!((r.p_value - c.p).abs() < 1e-4, "{} n={}: p {} vs {}", c.kind, c.n, r.p_value, c.p);
    }
}
