use rand::Rng;

use super::{build_covariance, fill_standard_normal, ExpKernel, SymMatrix};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

/// Diagonal jitter escalation for nearly semidefinite matrices, relative to
/// the mean diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub start: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            start: 1e-10,
            factor: 10.0,
            max: 1e-4,
        }
    }
}

/// Lower-triangular Cholesky factor, rows packed contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    packed: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.packed[row_start(i)..row_start(i + 1)]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[row_start(i) + j]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), &x[..=i])).collect()
    }

    /// Blocked row-oriented factorization of `a + jitter I`.
    fn factor(a: &SymMatrix, jitter: f64) -> Option<Self> {
        const BLOCK: usize = 48;
        let n = a.dim();
        let mut packed = vec![0.0; row_start(n)];
        let mut lo = 0;
        while lo < n {
            let hi = (lo + BLOCK).min(n);
            // Columns from finished rows: stream each finished row once per block.
            for j in 0..lo {
                let (done, rest) = packed.split_at_mut(row_start(lo));
                let lj = &done[row_start(j)..row_start(j + 1)];
                let diag = lj[j];
                for i in lo..hi {
                    let off = row_start(i) - row_start(lo);
                    let li = &mut rest[off..off + i + 1];
                    li[j] = (a.get(i, j) - dot(&li[..j], &lj[..j])) / diag;
                }
            }
            // Inside the block.
            for i in lo..hi {
                for j in lo..=i {
                    let (head, tail) = packed.split_at_mut(row_start(i));
                    let li = &mut tail[..i + 1];
                    let s = if j == i {
                        a.get(i, i) + jitter - dot(&li[..i], &li[..i])
                    } else {
                        let lj = &head[row_start(j)..row_start(j + 1)];
                        (a.get(i, j) - dot(&li[..j], &lj[..j])) / lj[j]
                    };
                    if j == i {
                        if !(s > 0.0) || !s.is_finite() {
                            return None;
                        }
                        li[i] = s.sqrt();
                    } else {
                        li[j] = s;
                    }
                }
            }
            lo = hi;
        }
        Some(Self { n, packed })
    }
}

/// Factors `a`, adding escalating diagonal jitter on failure. Returns the
/// factor and the jitter actually used (zero when none was needed).
pub fn cholesky_with_jitter(a: &SymMatrix, policy: JitterPolicy) -> Result<(CholeskyFactor, f64)> {
    if let Some(f) = CholeskyFactor::factor(a, 0.0) {
        return Ok((f, 0.0));
    }
    let scale = a.mean_diagonal().abs().max(f64::MIN_POSITIVE);
    let mut rel = policy.start;
    let mut last = 0.0;
    while rel <= policy.max * (1.0 + 1e-12) {
        last = rel.min(policy.max) * scale;
        if let Some(f) = CholeskyFactor::factor(a, last) {
            return Ok((f, last));
        }
        rel *= policy.factor;
    }
    Err(Error::Factorization { jitter: last })
}

/// Unit-variance correlated sampler over a fixed set of cells, backed by a
/// cached Cholesky factor of the correlation matrix.
#[derive(Debug, Clone)]
pub struct DenseSampler {
    cells: Vec<usize>,
    factor: CholeskyFactor,
    jitter: f64,
}

impl DenseSampler {
    pub fn new(spec: &LatticeSpec, cells: Vec<usize>, kernel: &ExpKernel, policy: JitterPolicy) -> Result<Self> {
        let grid: Vec<_> = cells.iter().map(|&c| spec.cell(c)).collect();
        let corr = build_covariance(&grid, kernel, &vec![1.0; grid.len()])?;
        let (factor, jitter) = cholesky_with_jitter(&corr, policy)?;
        Ok(Self { cells, factor, jitter })
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// One field per stream. The factor is streamed through once for all of
    /// them.
    pub fn sample_many<R: Rng>(&self, rngs: &mut [R]) -> Vec<Vec<f64>> {
        let n = self.cells.len();
        let xis: Vec<Vec<f64>> = rngs
            .iter_mut()
            .map(|rng| {
                let mut xi = vec![0.0; n];
                fill_standard_normal(rng, &mut xi);
                xi
            })
            .collect();
        let mut out = vec![vec![0.0; n]; xis.len()];
        for i in 0..n {
            let row = self.factor.row(i);
            for (z, xi) in out.iter_mut().zip(&xis) {
                z[i] = dot(row, &xi[..=i]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(f: &CholeskyFactor) -> Vec<f64> {
        let n = f.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..=i.min(j)).map(|k| f.get(i, k) * f.get(j, k)).sum();
            }
        }
        out
    }

    #[test]
    fn factor_reconstructs_lattice_correlation() {
        // big enough to cross several blocks
        let spec = LatticeSpec::grid(11, 12).unwrap();
        let cells: Vec<_> = (0..spec.cell_count()).map(|i| spec.cell(i)).collect();
        let a = build_covariance(&cells, &ExpKernel::correlation(0.3).unwrap(), &vec![1.0; cells.len()]).unwrap();
        let (f, jitter) = cholesky_with_jitter(&a, JitterPolicy::default()).unwrap();
        assert_eq!(jitter, 0.0);
        let back = reconstruct(&f);
        let n = a.dim();
        for i in 0..n {
            for j in 0..n {
                assert!((back[i * n + j] - a.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semidefinite_matrix_gets_jitter() {
        // rank one: all ones
        let a = SymMatrix::from_fn(5, |_, _| 1.0);
        let (f, jitter) = cholesky_with_jitter(&a, JitterPolicy::default()).unwrap();
        assert!(jitter > 0.0 && jitter <= 1e-4);
        let back = reconstruct(&f);
        assert!(back.iter().all(|v| (v - 1.0).abs() < 1e-3));
    }

    #[test]
    fn indefinite_matrix_fails_with_final_jitter() {
        let a = SymMatrix::from_rows(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        match cholesky_with_jitter(&a, JitterPolicy::default()) {
            Err(Error::Factorization { jitter }) => assert!((jitter - 1e-4).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
