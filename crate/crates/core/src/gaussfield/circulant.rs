use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirculantOptions {
    /// Largest tolerated fraction of clipped (negative) spectral mass.
    pub tolerance: f64,
    /// Embedding torus side as a multiple of the grid side (at least 2).
    pub padding: usize,
}

impl Default for CirculantOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            padding: 2,
        }
    }
}

/// Stationary unit-variance sampler by circulant embedding of the
/// correlation `e^{-λ_c r}` (max-norm `r`) on a periodic torus.
#[derive(Clone)]
pub struct CirculantSampler {
    rows: usize,
    cols: usize,
    emb_rows: usize,
    emb_cols: usize,
    /// `sqrt(max(eig, 0) / (M N))` per torus frequency.
    scale: Vec<f64>,
    clipped_fraction: f64,
    row_fft: Arc<dyn Fft<f64>>,
    col_fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("emb_rows", &self.emb_rows)
            .field("emb_cols", &self.emb_cols)
            .field("clipped_fraction", &self.clipped_fraction)
            .finish()
    }
}

impl CirculantSampler {
    pub fn new(rows: usize, cols: usize, lambda_c: f64, options: CirculantOptions) -> Result<Self> {
        if !(lambda_c.is_finite() && lambda_c >= 0.0) {
            return Err(Error::invalid(format!("lambda_c must be >= 0, got {lambda_c}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("empty grid"));
        }
        let padding = options.padding.max(2);
        let (emb_rows, emb_cols) = (padding * rows, padding * cols);
        let mut planner = FftPlanner::new();
        let row_fft = planner.plan_fft_forward(emb_cols);
        let col_fft = planner.plan_fft_forward(emb_rows);

        let mut base = vec![Complex64::new(0.0, 0.0); emb_rows * emb_cols];
        for r in 0..emb_rows {
            let dr = r.min(emb_rows - r);
            for c in 0..emb_cols {
                let dc = c.min(emb_cols - c);
                let d = dr.max(dc) as f64;
                let rho = if d == 0.0 { 1.0 } else { (-lambda_c * d).exp() };
                base[r * emb_cols + c] = Complex64::new(rho, 0.0);
            }
        }
        fft2(&mut base, emb_rows, emb_cols, &*row_fft, &*col_fft);

        let total: f64 = base.iter().map(|z| z.re.abs()).sum();
        let negative: f64 = base.iter().filter(|z| z.re < 0.0).map(|z| -z.re).sum();
        let clipped_fraction = if total > 0.0 { negative / total } else { 0.0 };
        if clipped_fraction > options.tolerance {
            return Err(Error::ClippedSpectrum {
                fraction: clipped_fraction,
                tolerance: options.tolerance,
            });
        }
        let norm = (emb_rows * emb_cols) as f64;
        let scale = base.iter().map(|z| (z.re.max(0.0) / norm).sqrt()).collect();
        Ok(Self {
            rows,
            cols,
            emb_rows,
            emb_cols,
            scale,
            clipped_fraction,
            row_fft,
            col_fft,
        })
    }

    pub fn clipped_fraction(&self) -> f64 {
        self.clipped_fraction
    }

    pub fn embedding(&self) -> (usize, usize) {
        (self.emb_rows, self.emb_cols)
    }

    /// Two independent fields (real and imaginary parts of one transform),
    /// each row-major over the original grid.
    pub fn sample_pair<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft2(&mut buf, self.emb_rows, self.emb_cols, &*self.row_fft, &*self.col_fft);
        let mut a = Vec::with_capacity(self.rows * self.cols);
        let mut b = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for z in &buf[r * self.emb_cols..r * self.emb_cols + self.cols] {
                a.push(z.re);
                b.push(z.im);
            }
        }
        (a, b)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_pair(rng).0
    }
}

fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, row_fft: &dyn Fft<f64>, col_fft: &dyn Fft<f64>) {
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Lane, StreamKey};

    #[test]
    fn same_seed_same_field() {
        let s = CirculantSampler::new(30, 31, 0.3, CirculantOptions::default()).unwrap();
        let a = s.sample(&mut StreamKey::new(5, 0, Lane::Field(0)).rng());
        let b = s.sample(&mut StreamKey::new(5, 0, Lane::Field(0)).rng());
        assert_eq!(a, b);
        assert_eq!(a.len(), 930);
    }

    #[test]
    fn independence_limit_has_no_clipping() {
        let s = CirculantSampler::new(10, 10, 50.0, CirculantOptions::default()).unwrap();
        assert!(s.clipped_fraction() < 1e-12);
    }

    #[test]
    fn tight_tolerance_is_reported() {
        let opts = CirculantOptions {
            tolerance: -1.0,
            padding: 2,
        };
        assert!(matches!(CirculantSampler::new(4, 4, 0.2, opts), Err(Error::ClippedSpectrum { .. })));
    }
}
