//! Parameter fitting from gridded counts: per-cell moments, `(l, σ²)` moment
//! matching, covariance-versus-distance curves, exponential decay fits and
//! the grid search for the field decay `λ_c`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cox::{CoxSimulator, PermanentalSpec, SimOptions, WeightFunction};
use crate::error::{Error, Result};
use crate::lattice::{CountField, LatticeSpec, RegionMask};
use crate::rng::{Lane, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    /// Sample mean per cell.
    pub mean: Vec<f64>,
    /// Unbiased sample variance per cell (divisor `R - 1`).
    pub var: Vec<f64>,
    pub replicates: usize,
}

/// Divisor of the per-cell sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceDivisor {
    /// `R - 1`.
    #[default]
    Unbiased,
    /// `R`.
    Population,
}

pub fn cell_moments(field: &CountField) -> Result<MomentSummary> {
    cell_moments_with(field, VarianceDivisor::Unbiased)
}

pub fn cell_moments_with(field: &CountField, divisor: VarianceDivisor) -> Result<MomentSummary> {
    let r = field.n_replicates();
    if r < 2 {
        return Err(Error::TooFewReplicates { required: 2, found: r });
    }
    let cells = field.cell_count();
    let mut mean = vec![0.0; cells];
    for k in 0..r {
        for (m, &c) in mean.iter_mut().zip(field.replicate(k)) {
            *m += f64::from(c);
        }
    }
    mean.iter_mut().for_each(|m| *m /= r as f64);
    let mut var = vec![0.0; cells];
    for k in 0..r {
        for ((v, &c), m) in var.iter_mut().zip(field.replicate(k)).zip(&mean) {
            let d = f64::from(c) - m;
            *v += d * d;
        }
    }
    let div = match divisor {
        VarianceDivisor::Unbiased => (r - 1) as f64,
        VarianceDivisor::Population => r as f64,
    };
    var.iter_mut().for_each(|v| *v /= div);
    Ok(MomentSummary { mean, var, replicates: r })
}

/// Which variance the field amplitudes are matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentMatch {
    /// `2 l σ⁴ = v`: the count variance is attributed entirely to the
    /// intensity, `l = max(1, ⌊2m²/v⌋)`.
    #[default]
    Intensity,
    /// `m + 2 l σ⁴ = v`: the Poisson part of the count variance is removed
    /// first, `l = max(1, round(2m²/(v - m)))`. Consistent for counts drawn
    /// from the model itself.
    PoissonCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub l_cap: usize,
    pub matching: MomentMatch,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            l_cap: 64,
            matching: MomentMatch::Intensity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSigmaFit {
    /// Number of fields instantiated: the largest per-cell `l`.
    pub l_global: usize,
    /// Per-cell `l_x`; zero outside the mask.
    pub cell_l: Vec<usize>,
    /// `σ_j²(x) = m(x)/l_x` for `j < l_x`, zero for the remaining fields.
    pub sigma2: Vec<Vec<f64>>,
    /// Cells where `l_cap` was binding.
    pub capped_cells: usize,
    /// Cells with positive mean and no excess variance.
    pub degenerate_cells: usize,
    pub options: FitOptions,
}

impl LSigmaFit {
    pub fn into_spec(self, lattice: LatticeSpec, mask: RegionMask, lambda_c: f64) -> Result<PermanentalSpec> {
        PermanentalSpec::new(lattice, mask, self.sigma2, lambda_c)
    }

    /// Median of `l_x` and of the per-field variance over cells with signal.
    pub fn median_cell_fit(&self) -> Option<(usize, f64)> {
        let mut ls = Vec::new();
        let mut s2 = Vec::new();
        for (i, &l) in self.cell_l.iter().enumerate() {
            if l > 0 && self.sigma2[0][i] > 0.0 {
                ls.push(l);
                s2.push(self.sigma2[0][i]);
            }
        }
        if ls.is_empty() {
            return None;
        }
        ls.sort_unstable();
        s2.sort_by(f64::total_cmp);
        Some((ls[ls.len() / 2], s2[s2.len() / 2]))
    }
}

/// Moment matching of `(l, σ²)` per cell, then one global field count.
pub fn fit_l_sigma(moments: &MomentSummary, mask: &RegionMask, options: FitOptions) -> Result<LSigmaFit> {
    let cells = moments.mean.len();
    if mask.flags().len() != cells {
        return Err(Error::invalid("mask does not match the moment summary"));
    }
    if options.l_cap == 0 {
        return Err(Error::invalid("l_cap must be at least 1"));
    }
    let mut cell_l = vec![0usize; cells];
    let mut capped = 0;
    let mut degenerate = 0;
    let mut any_signal = false;
    for i in mask.indices() {
        let (m, v) = (moments.mean[i], moments.var[i]);
        if m <= 0.0 {
            cell_l[i] = 1;
            continue;
        }
        any_signal = true;
        let excess = match options.matching {
            MomentMatch::Intensity => v,
            MomentMatch::PoissonCorrected => v - m,
        };
        let l = if excess <= 0.0 {
            degenerate += 1;
            options.l_cap
        } else {
            let ratio = 2.0 * m * m / excess;
            let raw = match options.matching {
                MomentMatch::Intensity => ratio.floor(),
                MomentMatch::PoissonCorrected => ratio.round(),
            };
            if raw > options.l_cap as f64 {
                capped += 1;
                options.l_cap
            } else {
                (raw as usize).max(1)
            }
        };
        cell_l[i] = l;
    }
    if !any_signal {
        return Err(Error::NoSignal);
    }
    let l_global = cell_l.iter().copied().max().unwrap_or(1).max(1);
    let mut sigma2 = vec![vec![0.0; cells]; l_global];
    for i in mask.indices() {
        let m = moments.mean[i];
        if m <= 0.0 {
            continue;
        }
        let s = m / cell_l[i] as f64;
        for row in sigma2.iter_mut().take(cell_l[i]) {
            row[i] = s;
        }
    }
    Ok(LSigmaFit {
        l_global,
        cell_l,
        sigma2,
        capped_cells: capped,
        degenerate_cells: degenerate,
        options,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Largest max-norm distance considered, in grid units.
    pub max_r: f64,
    pub bin_width: f64,
    /// Above this many candidate pairs, pairs are drawn at random.
    pub pair_budget: usize,
    pub seed: u64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            max_r: 20.0,
            bin_width: 1.0,
            pair_budget: 2_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayBin {
    /// Mean max-norm distance of the pairs in the bin.
    pub r: f64,
    /// Average pairwise sample covariance.
    pub cov: f64,
    /// Standard error of `cov` across replicates.
    pub se: f64,
    pub pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub bins: Vec<DecayBin>,
    /// Whether pairs were subsampled under the pair budget.
    pub subsampled: bool,
    pub options: CurveOptions,
}

/// Average sample covariance of cell pairs per distance bin.
///
/// With `mask`, only pairs of masked cells are used.
pub fn covariance_curve(field: &CountField, mask: Option<&RegionMask>, options: CurveOptions) -> Result<DecayCurve> {
    let reps = field.n_replicates();
    if reps < 2 {
        return Err(Error::TooFewReplicates { required: 2, found: reps });
    }
    if !(options.bin_width > 0.0 && options.max_r >= options.bin_width) {
        return Err(Error::invalid(format!(
            "need max_r >= bin_width > 0, got max_r {} and bin_width {}",
            options.max_r, options.bin_width
        )));
    }
    let (rows, cols) = field.dims();
    if let Some(m) = mask {
        m.check_dims(rows, cols)?;
    }
    let member: Vec<bool> = match mask {
        Some(m) => m.flags().to_vec(),
        None => vec![true; rows * cols],
    };
    let members: Vec<usize> = (0..rows * cols).filter(|&i| member[i]).collect();

    // centered series, cell-major
    let mut slot = vec![usize::MAX; rows * cols];
    let mut centered = Vec::with_capacity(members.len() * reps);
    for (s, &i) in members.iter().enumerate() {
        slot[i] = s;
        let series = field.cell_series(i);
        let mean = series.iter().sum::<f64>() / reps as f64;
        centered.extend(series.iter().map(|x| x - mean));
    }

    let max_d = (options.max_r + 1e-9).floor() as i64;
    let nbins = (options.max_r / options.bin_width - 1e-9).ceil().max(1.0) as usize;
    let bin_of = |d: i64| -> usize { ((d as f64 / options.bin_width - 1e-9).ceil() as usize).saturating_sub(1) };
    let mut offsets = Vec::new();
    for dr in 0..=max_d {
        for dc in -max_d..=max_d {
            if dr == 0 && dc <= 0 {
                continue;
            }
            let d = dr.max(dc.abs());
            if d <= max_d && bin_of(d) < nbins {
                offsets.push((dr, dc, bin_of(d), d));
            }
        }
    }

    let mut acc = vec![vec![0.0; reps]; nbins];
    let mut pairs = vec![0u64; nbins];
    let mut dist = vec![0.0; nbins];
    let partner = |a: usize, dr: i64, dc: i64| -> Option<usize> {
        let (r, c) = ((a / cols) as i64 + dr, (a % cols) as i64 + dc);
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            return None;
        }
        let b = r as usize * cols + c as usize;
        member[b].then_some(b)
    };
    let mut add = |a: usize, b: usize, bin: usize, d: i64| {
        let xa = &centered[slot[a] * reps..(slot[a] + 1) * reps];
        let xb = &centered[slot[b] * reps..(slot[b] + 1) * reps];
        for ((q, x), y) in acc[bin].iter_mut().zip(xa).zip(xb) {
            *q += x * y;
        }
        pairs[bin] += 1;
        dist[bin] += d as f64;
    };

    let candidates = members.len().saturating_mul(offsets.len());
    let subsampled = candidates > options.pair_budget;
    if !subsampled {
        for &(dr, dc, bin, d) in &offsets {
            for &a in &members {
                if let Some(b) = partner(a, dr, dc) {
                    add(a, b, bin, d);
                }
            }
        }
    } else if !members.is_empty() && !offsets.is_empty() {
        // uniform over (cell, offset) candidates, hence over valid pairs
        let mut rng = StreamKey::new(options.seed, 0, Lane::Subsample).rng();
        let mut accepted = 0;
        let max_draws = options.pair_budget.saturating_mul(64).max(1);
        for _ in 0..max_draws {
            if accepted == options.pair_budget {
                break;
            }
            let a = members[rng.random_range(0..members.len())];
            let (dr, dc, bin, d) = offsets[rng.random_range(0..offsets.len())];
            if let Some(b) = partner(a, dr, dc) {
                add(a, b, bin, d);
                accepted += 1;
            }
        }
    }

    let rf = reps as f64;
    let bins: Vec<DecayBin> = (0..nbins)
        .filter(|&b| pairs[b] > 0)
        .map(|b| {
            let n = pairs[b] as f64;
            let q: Vec<f64> = acc[b].iter().map(|s| s / n).collect();
            let qbar = q.iter().sum::<f64>() / rf;
            let qvar = q.iter().map(|v| (v - qbar).powi(2)).sum::<f64>() / (rf - 1.0);
            DecayBin {
                r: dist[b] / n,
                cov: q.iter().sum::<f64>() / (rf - 1.0),
                se: rf.sqrt() / (rf - 1.0) * qvar.sqrt(),
                pairs: pairs[b],
            }
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(DecayCurve { bins, subsampled, options })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub bins_used: usize,
}

/// Pair-weighted least squares of `log cov` on `r` over the positive bins.
pub fn fit_exponential_decay(curve: &DecayCurve) -> Result<DecayFit> {
    let pts: Vec<(f64, f64, f64)> = curve
        .bins
        .iter()
        .filter(|b| b.cov > 0.0 && b.cov.is_finite())
        .map(|b| (b.r, b.cov.ln(), b.pairs.max(1) as f64))
        .collect();
    if pts.len() < 2 {
        return Err(Error::TooFewPositiveBins {
            required: 2,
            found: pts.len(),
        });
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - ym).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::TooFewPositiveBins { required: 2, found: 1 });
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        rate: -slope,
        amplitude: intercept.exp(),
        r_squared,
        bins_used: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub grid_step: f64,
    pub max_lambda: f64,
    pub replicates: usize,
    pub seed: u64,
    pub curve: CurveOptions,
    pub sim: SimOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.005,
            max_lambda: 0.5,
            replicates: 20,
            seed: 0,
            curve: CurveOptions::default(),
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCandidate {
    pub lambda_c: f64,
    /// Fitted count-covariance decay, `None` when the curve had fewer than
    /// two positive bins.
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target_rate: f64,
    pub candidates: Vec<CalibrationCandidate>,
    pub selected: f64,
    pub options: CalibrationOptions,
}

/// The candidate grid `{0, step, 2 step, ...} ∩ [0, max_lambda]`.
pub fn lambda_grid(step: f64, max_lambda: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= max_lambda && max_lambda <= 0.5) {
        return Err(Error::invalid(format!(
            "grid step must lie in (0, {max_lambda}] and the grid within [0, 0.5], got step {step}"
        )));
    }
    let n = (max_lambda / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * step).collect())
}

/// Simulates `base` at every candidate `λ_c` (same seed for all
/// candidates) and keeps the one whose count-covariance decay rate is
/// closest to `target_rate`; ties go to the smaller `λ_c`.
pub fn calibrate_lambda_c(target_rate: f64, base: &PermanentalSpec, options: CalibrationOptions) -> Result<Calibration> {
    if !target_rate.is_finite() {
        return Err(Error::invalid("target rate must be finite"));
    }
    if options.replicates < 2 {
        return Err(Error::TooFewReplicates {
            required: 2,
            found: options.replicates,
        });
    }
    let grid = lambda_grid(options.grid_step, options.max_lambda)?;
    let g = WeightFunction::zeros(base.lattice.cell_count());
    let mut candidates = Vec::with_capacity(grid.len());
    for lambda_c in grid {
        let spec = base.with_lambda_c(lambda_c)?;
        let run = CoxSimulator::new(&spec, options.sim)?.run(options.replicates, options.seed, &g)?;
        let fit = covariance_curve(&run.counts, Some(&spec.mask), options.curve)
            .and_then(|c| fit_exponential_decay(&c))
            .ok();
        candidates.push(CalibrationCandidate {
            lambda_c,
            rate: fit.map(|f| f.rate),
            r_squared: fit.map(|f| f.r_squared),
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for c in &candidates {
        if let Some(rate) = c.rate {
            let gap = (rate - target_rate).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, c.lambda_c));
            }
        }
    }
    let (_, selected) = best.ok_or(Error::CalibrationFailed)?;
    Ok(Calibration {
        target_rate,
        candidates,
        selected,
        options,
    })
}
