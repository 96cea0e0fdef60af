//! Permanental Cox processes on a lattice.
//!
//! Each replicate draws `l` independent unit fields `Z_j`, forms the random
//! intensity `Λ(x) = Σ_j σ_j²(x) Z_j(x)²` and then conditionally Poisson
//! counts `N(x) | Λ ~ Poisson(Λ(x))` for every unit cell, using the
//! intensity at the cell as a piecewise-constant value over its unit area.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussfield::{CirculantOptions, FieldSampler, SamplerChoice};
use crate::lattice::{Cell, CountField, GeoPoint, LatticeSpec, RegionMask};
use crate::rng::{Lane, StreamKey};

/// Discretization flag recorded in run manifests.
pub const DISCRETIZATION: &str = "conditional-poisson, intensity constant over each unit cell";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermanentalSpec {
    pub lattice: LatticeSpec,
    pub mask: RegionMask,
    /// Number of Gaussian fields.
    pub l: usize,
    /// Per-field, per-cell variance `σ_j²(x)`, indexed `[j][cell]`.
    pub sigma2: Vec<Vec<f64>>,
    /// Correlation decay per grid unit.
    pub lambda_c: f64,
}

impl PermanentalSpec {
    pub fn new(lattice: LatticeSpec, mask: RegionMask, sigma2: Vec<Vec<f64>>, lambda_c: f64) -> Result<Self> {
        let spec = Self {
            lattice,
            mask,
            l: sigma2.len(),
            sigma2,
            lambda_c,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same `σ²` for every field on every masked cell.
    pub fn homogeneous(lattice: LatticeSpec, mask: RegionMask, l: usize, sigma2: f64, lambda_c: f64) -> Result<Self> {
        let table: Vec<f64> = mask.flags().iter().map(|&m| if m { sigma2 } else { 0.0 }).collect();
        Self::new(lattice, mask, vec![table; l], lambda_c)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.mask.check_dims(self.lattice.rows, self.lattice.cols)?;
        if self.l == 0 {
            return Err(Error::invalid("need at least one Gaussian field (l >= 1)"));
        }
        if self.sigma2.len() != self.l {
            return Err(Error::invalid(format!(
                "variance table has {} fields, l = {}",
                self.sigma2.len(),
                self.l
            )));
        }
        let cells = self.lattice.cell_count();
        for (j, row) in self.sigma2.iter().enumerate() {
            if row.len() != cells {
                return Err(Error::invalid(format!("field {j} has {} cells, expected {cells}", row.len())));
            }
            for (i, &s) in row.iter().enumerate() {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::invalid(format!("sigma2[{j}][{i}] = {s} must be finite and >= 0")));
                }
                if s > 0.0 && !self.mask.contains(i) {
                    return Err(Error::invalid(format!("sigma2[{j}][{i}] is positive outside the mask")));
                }
            }
        }
        if !(self.lambda_c.is_finite() && self.lambda_c >= 0.0) {
            return Err(Error::invalid(format!("lambda_c must be >= 0, got {}", self.lambda_c)));
        }
        Ok(())
    }

    pub fn with_lambda_c(&self, lambda_c: f64) -> Result<Self> {
        let mut s = self.clone();
        s.lambda_c = lambda_c;
        s.validate()?;
        Ok(s)
    }

    /// `E Λ(x) = Σ_j σ_j²(x)` per cell.
    pub fn mean_intensity(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.lattice.cell_count()];
        for row in &self.sigma2 {
            for (acc, s) in m.iter_mut().zip(row) {
                *acc += s;
            }
        }
        m
    }

    /// Cells where at least one field has positive variance.
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.lattice.cell_count())
            .filter(|&i| self.sigma2.iter().any(|row| row[i] > 0.0))
            .collect()
    }
}

/// Per-cell bounded weight `g` for the `p = 1` functional
/// `f(X ∩ Λ_n) = Σ_x g(x) N(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    weights: Vec<f64>,
}

impl WeightFunction {
    /// `g ≡ 1` on the mask; `f` is then the point count `N(Λ_n)`.
    pub fn ones(mask: &RegionMask) -> Self {
        Self {
            weights: mask.flags().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn zeros(cells: usize) -> Self {
        Self { weights: vec![0.0; cells] }
    }

    pub fn indicator(cells: usize, cell: usize) -> Self {
        let mut weights = vec![0.0; cells];
        weights[cell] = 1.0;
        Self { weights }
    }

    pub fn from_weights(mask: &RegionMask, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != mask.flags().len() {
            return Err(Error::invalid("weight vector length differs from the lattice"));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite { index: i, value: w });
            }
            if w != 0.0 && !mask.contains(i) {
                return Err(Error::invalid(format!("weight at cell {i} lies outside the mask")));
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bound(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }
}

pub fn functional_f(counts: &[u32], g: &WeightFunction) -> f64 {
    counts.iter().zip(&g.weights).map(|(&c, &w)| w * f64::from(c)).sum()
}

/// Conditionally Poisson counts for one replicate.
pub fn sample_counts(intensity: &[f64], master: u64, replicate: u64) -> Result<Vec<u32>> {
    let mut rng = StreamKey::new(master, replicate, Lane::Counts).rng();
    intensity
        .iter()
        .enumerate()
        .map(|(i, &lam)| {
            if !(lam.is_finite() && lam >= 0.0) {
                return Err(Error::NonFinite { index: i, value: lam });
            }
            if lam == 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(lam).map_err(|e| Error::invalid(format!("intensity {lam}: {e}")))?;
            Ok(d.sample(&mut rng) as u32)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    #[serde(default)]
    pub sampler: SamplerChoice,
    #[serde(default = "default_circulant_tolerance")]
    pub circulant_tolerance: f64,
    #[serde(default = "default_padding")]
    pub circulant_padding: usize,
}

fn default_circulant_tolerance() -> f64 {
    CirculantOptions::default().tolerance
}

fn default_padding() -> usize {
    CirculantOptions::default().padding
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sampler: SamplerChoice::Auto,
            circulant_tolerance: default_circulant_tolerance(),
            circulant_padding: default_padding(),
        }
    }
}

impl SimOptions {
    fn circulant(&self) -> CirculantOptions {
        CirculantOptions {
            tolerance: self.circulant_tolerance,
            padding: self.circulant_padding,
        }
    }
}

/// A spec with its field sampler prepared once, reused across replicates.
#[derive(Debug, Clone)]
pub struct CoxSimulator {
    spec: PermanentalSpec,
    sampler: Option<FieldSampler>,
    /// `σ_j` over the sampler's cells, `None` for fields that vanish everywhere.
    amplitude: Vec<Option<Vec<f64>>>,
}

impl CoxSimulator {
    pub fn new(spec: &PermanentalSpec, options: SimOptions) -> Result<Self> {
        spec.validate()?;
        let active = spec.active_cells();
        let amplitude = spec
            .sigma2
            .iter()
            .map(|row| {
                let amp: Vec<f64> = active.iter().map(|&c| row[c].sqrt()).collect();
                amp.iter().any(|&a| a > 0.0).then_some(amp)
            })
            .collect();
        let sampler = if active.is_empty() {
            None
        } else {
            Some(FieldSampler::new(
                &spec.lattice,
                active,
                spec.lambda_c,
                options.sampler,
                options.circulant(),
            )?)
        };
        Ok(Self {
            spec: spec.clone(),
            sampler,
            amplitude,
        })
    }

    pub fn spec(&self) -> &PermanentalSpec {
        &self.spec
    }

    /// Jitter or clipped spectral fraction of the underlying sampler.
    pub fn approximation(&self) -> f64 {
        self.sampler.as_ref().map_or(0.0, FieldSampler::approximation)
    }

    /// `Λ(x)` over the full lattice for one replicate.
    pub fn intensity(&self, master: u64, replicate: u64) -> Vec<f64> {
        let mut lambda = vec![0.0; self.spec.lattice.cell_count()];
        let Some(sampler) = &self.sampler else {
            return lambda;
        };
        let live: Vec<usize> = (0..self.amplitude.len()).filter(|&j| self.amplitude[j].is_some()).collect();
        let mut rngs: Vec<_> = live
            .iter()
            .map(|&j| StreamKey::new(master, replicate, Lane::Field(j as u16)).rng())
            .collect();
        let fields = sampler.sample_many(&mut rngs);
        let cells = sampler.cells();
        for (z, &j) in fields.iter().zip(&live) {
            let amp = self.amplitude[j].as_ref().expect("live field");
            for ((&cell, &a), &zi) in cells.iter().zip(amp).zip(z) {
                let y = a * zi;
                lambda[cell] += y * y;
            }
        }
        lambda
    }

    pub fn counts(&self, master: u64, replicate: u64) -> Result<Vec<u32>> {
        sample_counts(&self.intensity(master, replicate), master, replicate)
    }

    /// `R` replicates labelled `0..R`.
    pub fn run(&self, replicates: usize, master: u64, g: &WeightFunction) -> Result<SimulationRun> {
        if replicates == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        if g.weights.len() != self.spec.lattice.cell_count() {
            return Err(Error::invalid("weight function does not match the lattice"));
        }
        let reps = self.map_replicates(replicates, |k| self.counts(master, k as u64))?;
        let totals = reps.iter().map(|c| functional_f(c, g)).collect();
        let counts = CountField::from_replicates(
            self.spec.lattice.rows,
            self.spec.lattice.cols,
            (0..replicates as i64).collect(),
            reps,
        )?;
        Ok(SimulationRun {
            counts,
            totals,
            master_seed: master,
            spec: self.spec.clone(),
        })
    }

    #[cfg(feature = "parallel")]
    fn map_replicates<T: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn map_replicates<T: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        (0..n).map(f).collect()
    }
}

/// `Λ` for one replicate; prepares a sampler on every call, so prefer
/// [`CoxSimulator`] for ensembles.
pub fn build_intensity(spec: &PermanentalSpec, master: u64, replicate: u64) -> Result<Vec<f64>> {
    Ok(CoxSimulator::new(spec, SimOptions::default())?.intensity(master, replicate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub counts: CountField,
    /// `f(X ∩ Λ_n)` per replicate.
    pub totals: Vec<f64>,
    pub master_seed: u64,
    pub spec: PermanentalSpec,
}

pub fn run_replicates(spec: &PermanentalSpec, replicates: usize, master: u64, g: &WeightFunction) -> Result<SimulationRun> {
    CoxSimulator::new(spec, SimOptions::default())?.run(replicates, master, g)
}

/// Model covariance of the counts in cells `a` and `b`.
///
/// Distinct cells: `2 e^{-2λ_c r} Σ_j σ_j²(a) σ_j²(b)` (Gaussian fourth
/// moments). Same cell: `Σ_j σ_j² + 2 Σ_j σ_j⁴`.
pub fn theoretical_count_cov(spec: &PermanentalSpec, a: Cell, b: Cell) -> f64 {
    let (ia, ib) = (spec.lattice.index(a), spec.lattice.index(b));
    if ia == ib {
        return spec.sigma2.iter().map(|row| row[ia] + 2.0 * row[ia] * row[ia]).sum();
    }
    let r = a.distance(b) as f64;
    let rho2 = (-2.0 * spec.lambda_c * r).exp();
    2.0 * rho2 * spec.sigma2.iter().map(|row| row[ia] * row[ib]).sum::<f64>()
}

/// Model mean and variance of the total count over `mask`. Quadratic in the
/// number of masked cells.
pub fn theoretical_total_moments(spec: &PermanentalSpec, mask: &RegionMask) -> Result<(f64, f64)> {
    mask.check_dims(spec.lattice.rows, spec.lattice.cols)?;
    let cells: Vec<Cell> = mask.indices().map(|i| spec.lattice.cell(i)).collect();
    let m = spec.mean_intensity();
    let mean = cells.iter().map(|&c| m[spec.lattice.index(c)]).sum();
    let mut var = 0.0;
    for (i, &a) in cells.iter().enumerate() {
        var += theoretical_count_cov(spec, a, a);
        for &b in &cells[i + 1..] {
            var += 2.0 * theoretical_count_cov(spec, a, b);
        }
    }
    Ok((mean, var))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub points: Vec<GeoPoint>,
    /// The generating counts, one replicate per year.
    pub field: CountField,
    pub years: Vec<i32>,
}

/// Synthetic incident records: one simulated replicate per year, points
/// placed uniformly at random inside their cell.
pub fn synth_dataset(spec: &PermanentalSpec, years: usize, first_year: i32, master: u64, options: SimOptions) -> Result<SyntheticDataset> {
    if years == 0 {
        return Err(Error::invalid("need at least one year"));
    }
    let sim = CoxSimulator::new(spec, options)?;
    let run = sim.run(years, master, &WeightFunction::zeros(spec.lattice.cell_count()))?;
    let lat = &spec.lattice;
    // keep clear of the far edges so every point bins back into its cell
    const MARGIN: f64 = 1e-6;
    let mut points = Vec::new();
    let year_list: Vec<i32> = (0..years as i32).map(|k| first_year + k).collect();
    for (k, &year) in year_list.iter().enumerate() {
        let mut rng = StreamKey::new(master, k as u64, Lane::Placement).rng();
        for (idx, &n) in run.counts.replicate(k).iter().enumerate() {
            let (top, left) = lat.cell_anchor(lat.cell(idx));
            for _ in 0..n {
                let u: f64 = MARGIN + (1.0 - 2.0 * MARGIN) * rng.random::<f64>();
                let v: f64 = MARGIN + (1.0 - 2.0 * MARGIN) * rng.random::<f64>();
                points.push(GeoPoint {
                    lat: top - u * lat.unit,
                    lon: left + v * lat.unit,
                    year,
                });
            }
        }
    }
    let field = CountField::from_replicates(
        lat.rows,
        lat.cols,
        year_list.iter().map(|&y| i64::from(y)).collect(),
        (0..years).map(|k| run.counts.replicate(k).to_vec()).collect(),
    )?;
    Ok(SyntheticDataset {
        points,
        field,
        years: year_list,
    })
}
