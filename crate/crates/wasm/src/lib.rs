//! Browser bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the
//! logic is testable off the browser.

use firecox::cox::{CoxSimulator, PermanentalSpec, SimOptions, WeightFunction};
use firecox::diagnostics::w1_of_totals;
use firecox::lattice::{block_totals, Cell, LatticeSpec, RegionMask};
use firecox::steinbound::{bound_curve, log_spaced, AssocBoundParams};
use wasm_bindgen::prelude::*;

/// Largest grid side the page may request; the dense factor grows as side⁶.
pub const MAX_SIDE: usize = 48;

fn spec(side: usize, l: usize, sigma2: f64, lambda_c: f64) -> Result<PermanentalSpec, String> {
    if side == 0 || side > MAX_SIDE {
        return Err(format!("grid side must be in 1..={MAX_SIDE}, got {side}"));
    }
    let lattice = LatticeSpec::grid(side, side).map_err(|e| e.to_string())?;
    PermanentalSpec::homogeneous(lattice, RegionMask::full(side, side), l, sigma2, lambda_c).map_err(|e| e.to_string())
}

/// One replicate: intensity for every cell followed by the counts.
pub fn draw_field_impl(side: usize, l: usize, sigma2: f64, lambda_c: f64, seed: u64) -> Result<Vec<f64>, String> {
    let s = spec(side, l, sigma2, lambda_c)?;
    let sim = CoxSimulator::new(&s, SimOptions::default()).map_err(|e| e.to_string())?;
    let mut out = sim.intensity(seed, 0);
    out.extend(sim.counts(seed, 0).map_err(|e| e.to_string())?.into_iter().map(f64::from));
    Ok(out)
}

/// `(n, W₁)` pairs for nested blocks of side 2, 4, ... anchored at the corner.
pub fn w1_curve_impl(side: usize, l: usize, sigma2: f64, lambda_c: f64, replicates: usize, seed: u64) -> Result<Vec<f64>, String> {
    if replicates < 3 {
        return Err("need at least 3 replicates".into());
    }
    let s = spec(side, l, sigma2, lambda_c)?;
    let g = WeightFunction::ones(&s.mask);
    let run = CoxSimulator::new(&s, SimOptions::default())
        .and_then(|sim| sim.run(replicates, seed, &g))
        .map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for n in (2..=side).step_by(2) {
        let totals: Vec<f64> = block_totals(&run.counts, n, Cell::new(0, 0))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|v| v as f64)
            .collect();
        // all-equal totals happen for tiny blocks at tiny intensity
        if let Ok(w) = w1_of_totals(&totals, None) {
            out.push(n as f64);
            out.push(w.distance);
        }
    }
    Ok(out)
}

/// Rows of `n, T1, T2, T3, T4, total` over log-spaced `n`.
#[allow(clippy::too_many_arguments)]
pub fn bound_table_impl(
    d: u32,
    m: f64,
    kappa: f64,
    lambda: f64,
    gamma: f64,
    k: f64,
    n_min: f64,
    n_max: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let ns = log_spaced(n_min, n_max, points).map_err(|e| e.to_string())?;
    let p = AssocBoundParams {
        d,
        m,
        kappa,
        lambda,
        gamma,
        k,
        r_mu_nu: 1.0,
        n: ns[0],
    };
    let curve = bound_curve(&p, &ns).map_err(|e| e.to_string())?;
    Ok(curve
        .points
        .iter()
        .flat_map(|(n, b)| [*n, b.t1, b.t2, b.t3, b.t4, b.total])
        .collect())
}

#[wasm_bindgen]
pub fn draw_field(side: usize, l: usize, sigma2: f64, lambda_c: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    draw_field_impl(side, l, sigma2, lambda_c, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn w1_curve(side: usize, l: usize, sigma2: f64, lambda_c: f64, replicates: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    w1_curve_impl(side, l, sigma2, lambda_c, replicates, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bound_table(
    d: u32,
    m: f64,
    kappa: f64,
    lambda: f64,
    gamma: f64,
    k: f64,
    n_min: f64,
    n_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    bound_table_impl(d, m, kappa, lambda, gamma, k, n_min, n_max, points).map_err(|e| JsError::new(&e))
}
