//! Zero-mean Gaussian random fields on the lattice with exponential
//! covariance in the max norm, `C(r) = κ_c e^{-λ_c r}`.
//!
//! Fields are built as `Y(x) = σ(x) Z(x)` where `Z` is a stationary,
//! unit-variance field with correlation `e^{-λ_c r}`. Per-cell amplitudes
//! therefore never touch the factorization: one correlation factor serves
//! every field and replicate.

mod circulant;
mod dense;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use circulant::{CirculantOptions, CirculantSampler};
pub use dense::{cholesky_with_jitter, CholeskyFactor, DenseSampler, JitterPolicy};

use crate::error::{Error, Result};
use crate::lattice::{Cell, LatticeSpec};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpKernel {
    pub kappa_c: f64,
    pub lambda_c: f64,
}

impl ExpKernel {
    pub fn new(kappa_c: f64, lambda_c: f64) -> Result<Self> {
        if !(kappa_c.is_finite() && kappa_c >= 0.0) {
            return Err(Error::invalid(format!("kappa_c must be >= 0, got {kappa_c}")));
        }
        if !(lambda_c.is_finite() && lambda_c >= 0.0) {
            return Err(Error::invalid(format!("lambda_c must be >= 0, got {lambda_c}")));
        }
        Ok(Self { kappa_c, lambda_c })
    }

    /// Unit-variance kernel with decay `lambda_c`.
    pub fn correlation(lambda_c: f64) -> Result<Self> {
        Self::new(1.0, lambda_c)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::invalid(format!("distance must be >= 0, got {r}")));
        }
        Ok(self.kappa_c * (-self.lambda_c * r).exp())
    }

    /// `e^{-λ_c r}`; infinite decay gives the independence limit.
    pub fn rho(&self, r: f64) -> f64 {
        if r == 0.0 {
            1.0
        } else {
            (-self.lambda_c * r).exp()
        }
    }
}

/// Dense symmetric matrix stored row-major in full.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    /// Builds from a full row-major buffer, checking symmetry.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid("matrix buffer has the wrong length"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum::<f64>() / self.n.max(1) as f64
    }
}

/// Covariance `amp(a) amp(b) e^{-λ_c |x_a - x_b|_∞}` over `cells`.
///
/// `κ_c` is expected to be folded into the amplitudes, so only the kernel's
/// decay is used.
pub fn build_covariance(cells: &[Cell], kernel: &ExpKernel, amplitude: &[f64]) -> Result<SymMatrix> {
    if amplitude.len() != cells.len() {
        return Err(Error::invalid(format!("{} amplitudes for {} cells", amplitude.len(), cells.len())));
    }
    if let Some(a) = amplitude.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::invalid(format!("amplitudes must be finite and >= 0, got {a}")));
    }
    Ok(SymMatrix::from_fn(cells.len(), |i, j| {
        amplitude[i] * amplitude[j] * kernel.rho(cells[i].distance(cells[j]) as f64)
    }))
}

/// One realization of a field together with the stream it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub seed: u64,
    pub jitter: f64,
}

pub(crate) fn fill_standard_normal(rng: &mut impl Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Draws one Gaussian vector with covariance `cov`, deterministically from
/// `seed`.
pub fn sample_field_dense(cov: &SymMatrix, seed: u64) -> Result<FieldSample> {
    let (factor, jitter) = cholesky_with_jitter(cov, JitterPolicy::default())?;
    let mut rng = StreamKey::new(seed, 0, crate::rng::Lane::Field(0)).rng();
    let mut xi = vec![0.0; cov.dim()];
    fill_standard_normal(&mut rng, &mut xi);
    Ok(FieldSample {
        values: factor.mul_vec(&xi),
        seed,
        jitter,
    })
}

/// Draws a stationary field with kernel `kernel` over the whole lattice
/// (row-major) via circulant embedding.
pub fn sample_field_circulant(spec: &LatticeSpec, kernel: &ExpKernel, seed: u64, options: CirculantOptions) -> Result<FieldSample> {
    let sampler = CirculantSampler::new(spec.rows, spec.cols, kernel.lambda_c, options)?;
    let mut rng = StreamKey::new(seed, 0, crate::rng::Lane::Field(0)).rng();
    let scale = kernel.kappa_c.sqrt();
    let values = sampler.sample(&mut rng).into_iter().map(|z| z * scale).collect();
    Ok(FieldSample { values, seed, jitter: 0.0 })
}

/// How unit-variance fields are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerChoice {
    /// Dense up to [`DENSE_CELL_LIMIT`] cells, circulant above.
    #[default]
    Auto,
    Dense,
    Circulant,
}

/// Largest cell count sampled exactly by default.
pub const DENSE_CELL_LIMIT: usize = 10_000;

/// A prepared unit-variance correlated field sampler over a set of lattice
/// cells.
#[derive(Debug, Clone)]
pub enum FieldSampler {
    Dense(DenseSampler),
    Circulant { sampler: CirculantSampler, cells: Vec<usize> },
}

impl FieldSampler {
    /// Prepares a sampler for `cells` (lattice indices, row-major order).
    pub fn new(spec: &LatticeSpec, cells: Vec<usize>, lambda_c: f64, choice: SamplerChoice, circulant: CirculantOptions) -> Result<Self> {
        let dense = match choice {
            SamplerChoice::Dense => true,
            SamplerChoice::Circulant => false,
            SamplerChoice::Auto => cells.len() <= DENSE_CELL_LIMIT,
        };
        if dense {
            let kernel = ExpKernel::correlation(lambda_c)?;
            Ok(FieldSampler::Dense(DenseSampler::new(
                spec,
                cells,
                &kernel,
                JitterPolicy::default(),
            )?))
        } else {
            let sampler = CirculantSampler::new(spec.rows, spec.cols, lambda_c, circulant)?;
            Ok(FieldSampler::Circulant { sampler, cells })
        }
    }

    pub fn cells(&self) -> &[usize] {
        match self {
            FieldSampler::Dense(d) => d.cells(),
            FieldSampler::Circulant { cells, .. } => cells,
        }
    }

    /// Jitter added to the diagonal (dense) or clipped spectral mass
    /// fraction (circulant).
    pub fn approximation(&self) -> f64 {
        match self {
            FieldSampler::Dense(d) => d.jitter(),
            FieldSampler::Circulant { sampler, .. } => sampler.clipped_fraction(),
        }
    }

    /// Draws `rngs.len()` independent unit fields, one per stream, returned
    /// in the order of [`Self::cells`].
    pub fn sample_many<R: Rng>(&self, rngs: &mut [R]) -> Vec<Vec<f64>> {
        match self {
            FieldSampler::Dense(d) => d.sample_many(rngs),
            FieldSampler::Circulant { sampler, cells } => rngs
                .iter_mut()
                .map(|rng| {
                    let full = sampler.sample(rng);
                    cells.iter().map(|&c| full[c]).collect()
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let k = ExpKernel::new(1.0, 0.15).unwrap();
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert_eq!(k.eval(1.0).unwrap(), (-0.15f64).exp());
        assert_eq!(ExpKernel::new(1.0, 0.0).unwrap().eval(100.0).unwrap(), 1.0);
        assert!(k.eval(-1.0).is_err());
        assert!(ExpKernel::new(-1.0, 0.1).is_err());
        assert!(ExpKernel::new(1.0, -0.1).is_err());
    }

    #[test]
    fn kernel_nonincreasing() {
        let k = ExpKernel::new(2.5, 0.3).unwrap();
        let vals: Vec<f64> = (0..50).map(|r| k.eval(r as f64 * 0.5).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn covariance_entries() {
        let k = ExpKernel::correlation(0.7).unwrap();
        let single = build_covariance(&[Cell::new(3, 3)], &k, &[1.5]).unwrap();
        assert_eq!(single.get(0, 0), 2.25);

        let cells = [Cell::new(0, 0), Cell::new(1, 1)];
        let m = build_covariance(&cells, &k, &[2.0, 0.5]).unwrap();
        assert!((m.get(0, 1) - 2.0 * 0.5 * (-0.7f64).exp()).abs() < 1e-15);
        assert_eq!(m.get(0, 1), m.get(1, 0));

        let far = build_covariance(&cells, &ExpKernel::correlation(1e6).unwrap(), &[1.0, 1.0]).unwrap();
        assert_eq!(far.get(0, 1), 0.0);
        assert_eq!(far.get(0, 0), 1.0);

        assert!(build_covariance(&cells, &k, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn dense_sampling_is_deterministic() {
        let cov = SymMatrix::from_rows(2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let a = sample_field_dense(&cov, 99).unwrap();
        let b = sample_field_dense(&cov, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, sample_field_dense(&cov, 100).unwrap().values);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        assert!(SymMatrix::from_rows(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    }
}
