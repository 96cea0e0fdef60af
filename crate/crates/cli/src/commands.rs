use std::path::{Path, PathBuf};

use firecox::cox::{synth_dataset, CoxSimulator, PermanentalSpec, WeightFunction};
use firecox::diagnostics::{
    association_check, rate_comparison, rate_exponent, shapiro_wilk, variance_rate_curve, w1_of_totals, AssociationReport, RateCurve,
    SWResult,
};
use firecox::estimate::{
    calibrate_lambda_c, cell_moments_with, covariance_curve, fit_exponential_decay, fit_l_sigma, CalibrationCandidate, CalibrationOptions,
    CurveOptions, DecayCurve, DecayFit, FitOptions,
};
use firecox::io::{counts_from_table, counts_table, mask_from_table, points_table, read_points, MalformedRow, Table};
use firecox::lattice::{
    bin_points, bin_points_with_years, block_totals, mask_totals, Cell, CountField, IngestReport, LatticeSpec, RegionMask,
};
use firecox::rng::derive_seed;
use firecox::steinbound::{bound_curve, log_spaced, threshold_report, BoundBreakdown, ThresholdReport};
use rand::seq::index::sample;
use serde::Serialize;

use crate::artifacts::RunContext;
use crate::config::{MaskSource, RunConfig};
use crate::error::CliError;

/// Shortest round-trip text, with an exponent for very small or large values.
fn real(v: f64) -> String {
    format!("{v:?}")
}

pub fn load_mask(ctx: &mut RunContext, lattice: &LatticeSpec) -> Result<RegionMask, CliError> {
    let (rows, cols) = lattice.dims();
    let mask = match ctx.config.mask.clone() {
        MaskSource::Full => RegionMask::full(rows, cols),
        MaskSource::Rectangle { top, left, height, width } => {
            if top + height > rows || left + width > cols || height == 0 || width == 0 {
                return Err(CliError::Config(format!(
                    "mask rectangle {height}x{width} at ({top}, {left}) does not fit the {rows}x{cols} lattice"
                )));
            }
            RegionMask::rectangle(rows, cols, top, left, height, width)
        }
        MaskSource::File { path } => {
            let t = ctx.read_table("mask", &path)?;
            let m = mask_from_table(&t)?;
            m.check_dims(rows, cols)?;
            m
        }
    };
    if mask.is_empty() {
        return Err(CliError::Config("the mask selects no cells".into()));
    }
    Ok(mask)
}

fn read_spec(ctx: &mut RunContext, path: &Path) -> Result<PermanentalSpec, CliError> {
    let raw: PermanentalSpec = ctx.read_json("spec", path)?;
    // rebuild through the validating constructors
    let (rows, cols) = raw.lattice.dims();
    let mask = RegionMask::from_flags(rows, cols, raw.mask.flags().to_vec())?;
    let lattice = LatticeSpec::new(raw.lattice.origin_lat, raw.lattice.origin_lon, raw.lattice.unit, rows, cols)?;
    Ok(PermanentalSpec::new(lattice, mask, raw.sigma2, raw.lambda_c)?)
}

fn read_counts(ctx: &mut RunContext, path: &Path) -> Result<CountField, CliError> {
    let t = ctx.read_table("counts", path)?;
    Ok(counts_from_table(&t)?)
}

#[derive(Serialize)]
struct IngestOutput<'a> {
    report: &'a IngestReport,
    malformed_rows: &'a [MalformedRow],
}

pub fn ingest(mut ctx: RunContext, input: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lattice = ctx.config.lattice.spec()?;
    let bytes = ctx.read_input("points", input)?;
    let read = read_points(bytes.as_slice())?;
    let frac = read.malformed_fraction();
    if frac > ctx.config.ingest.max_malformed_fraction {
        let first: Vec<String> = read
            .malformed
            .iter()
            .take(5)
            .map(|m| format!("line {}: {}", m.line, m.reason))
            .collect();
        return Err(CliError::Usage(format!(
            "{} of {} rows malformed ({:.2}% > {:.2}% allowed); first: {}",
            read.malformed.len(),
            read.points.len() + read.malformed.len(),
            100.0 * frac,
            100.0 * ctx.config.ingest.max_malformed_fraction,
            first.join("; ")
        )));
    }
    let binned = if ctx.config.ingest.years.is_empty() {
        bin_points(&read.points, &lattice)?
    } else {
        bin_points_with_years(&read.points, &lattice, &ctx.config.ingest.years)?
    };
    ctx.write_table("counts.csv", counts_table(&binned.field))?;
    ctx.write_json(
        "ingest_report.json",
        &IngestOutput {
            report: &binned.report,
            malformed_rows: &read.malformed,
        },
    )?;
    ctx.finish()
}

#[derive(Serialize)]
struct FitReport {
    replicates: usize,
    l_global: usize,
    median_cell_l: Option<usize>,
    median_cell_sigma2: Option<f64>,
    capped_cells: usize,
    degenerate_cells: usize,
    data_decay: DecayFit,
    target_rate: f64,
    target_source: &'static str,
    selected_lambda_c: f64,
    candidates: Vec<CalibrationCandidate>,
}

fn curve_options(cfg: &RunConfig, seed: u64) -> CurveOptions {
    CurveOptions {
        max_r: cfg.estimate.max_r,
        bin_width: cfg.estimate.bin_width,
        pair_budget: cfg.estimate.pair_budget,
        seed,
    }
}

fn curve_table(curve: &DecayCurve) -> Table {
    let mut t = Table::new(&["r", "cov", "se", "pairs"]);
    for b in &curve.bins {
        t.push(vec![real(b.r), real(b.cov), real(b.se), b.pairs.to_string()]);
    }
    t
}

pub fn fit(mut ctx: RunContext, counts: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lattice = ctx.config.lattice.spec()?;
    let field = read_counts(&mut ctx, counts)?;
    if field.dims() != lattice.dims() {
        return Err(firecox::Error::DimensionMismatch {
            expected: lattice.dims(),
            found: field.dims(),
        }
        .into());
    }
    let mask = load_mask(&mut ctx, &lattice)?;
    let cfg = ctx.config.clone();
    let moments = cell_moments_with(&field, cfg.estimate.variance_divisor)?;
    let fitted = fit_l_sigma(
        &moments,
        &mask,
        FitOptions {
            l_cap: cfg.estimate.l_cap,
            matching: cfg.estimate.moment_match,
        },
    )?;
    let curve_opts = curve_options(&cfg, derive_seed(cfg.simulate.seed, "pair-subsample"));
    let data_curve = covariance_curve(&field, Some(&mask), curve_opts)?;
    let data_decay = fit_exponential_decay(&data_curve)?;
    let (target_rate, target_source) = match cfg.estimate.target_rate {
        Some(r) => (r, "config"),
        None => (data_decay.rate, "data"),
    };
    let median = fitted.median_cell_fit();
    let summary = (fitted.l_global, fitted.capped_cells, fitted.degenerate_cells);
    let base = fitted.into_spec(lattice, mask.clone(), 0.0)?;
    let cal = calibrate_lambda_c(
        target_rate,
        &base,
        CalibrationOptions {
            grid_step: cfg.estimate.grid_step,
            max_lambda: cfg.estimate.max_lambda,
            replicates: cfg.estimate.calibration_replicates,
            seed: derive_seed(cfg.simulate.seed, "calibration"),
            curve: curve_opts,
            sim: cfg.simulate.options(),
        },
    )?;
    let spec = base.with_lambda_c(cal.selected)?;

    ctx.write_json("spec.json", &spec)?;
    ctx.write_table("decay_curve.csv", curve_table(&data_curve))?;
    let mut ct = Table::new(&["lambda_c", "rate", "r_squared"]);
    for c in &cal.candidates {
        ct.push(vec![
            real(c.lambda_c),
            c.rate.map_or(String::new(), real),
            c.r_squared.map_or(String::new(), real),
        ]);
    }
    ctx.write_table("calibration.csv", ct)?;
    ctx.write_json(
        "fit_report.json",
        &FitReport {
            replicates: field.n_replicates(),
            l_global: summary.0,
            median_cell_l: median.map(|m| m.0),
            median_cell_sigma2: median.map(|m| m.1),
            capped_cells: summary.1,
            degenerate_cells: summary.2,
            data_decay,
            target_rate,
            target_source,
            selected_lambda_c: cal.selected,
            candidates: cal.candidates,
        },
    )?;
    ctx.finish()
}

fn totals_table(totals: &[f64]) -> Table {
    let mut t = Table::new(&["replicate", "total"]);
    for (k, v) in totals.iter().enumerate() {
        t.push(vec![k.to_string(), real(*v)]);
    }
    t
}

pub fn simulate(mut ctx: RunContext, spec_path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let spec = read_spec(&mut ctx, spec_path)?;
    let cfg = ctx.config.clone();
    let g = WeightFunction::ones(&spec.mask);
    let run = CoxSimulator::new(&spec, cfg.simulate.options())?.run(cfg.simulate.replicates, cfg.simulate.seed, &g)?;
    ctx.write_json("spec.json", &spec)?;
    ctx.write_table("counts.csv", counts_table(&run.counts))?;
    ctx.write_table("totals.csv", totals_table(&run.totals))?;
    ctx.finish()
}

#[derive(Debug, Clone, Serialize)]
struct PerN {
    n: usize,
    w1: f64,
    sw: SWResult,
    sw_subsampled: bool,
    var_rate: f64,
}

#[derive(Serialize)]
struct DiagnosticsReport {
    replicates: usize,
    anchor: [usize; 2],
    w1_method: &'static str,
    per_n: Vec<PerN>,
    w1_rate: Option<RateCurve>,
    variance_rate: RateCurve,
    reference_exponent: f64,
    association: Option<AssociationReport>,
}

/// Per-n W₁, Shapiro–Wilk and variance rate for blocks of one run.
fn diagnose_field(cfg: &RunConfig, field: &CountField) -> Result<(Vec<PerN>, Vec<(usize, Vec<f64>)>), CliError> {
    let reps = field.n_replicates();
    if reps < 3 {
        return Err(firecox::Error::TooFewReplicates { required: 3, found: reps }.into());
    }
    let d = &cfg.diagnose;
    if d.n_list.is_empty() {
        return Err(CliError::Config("diagnose.n_list is empty".into()));
    }
    if d.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("diagnose.n_list must be strictly increasing".into()));
    }
    let anchor = Cell::new(d.anchor[0], d.anchor[1]);
    let mut per_n = Vec::new();
    let mut all = Vec::new();
    for &n in &d.n_list {
        let totals: Vec<f64> = block_totals(field, n, anchor)?.into_iter().map(|v| v as f64).collect();
        let w1 = w1_of_totals(&totals, None)?;
        let (sw_input, subsampled) = if totals.len() > d.sw_max {
            let mut rng = firecox::rng::StreamKey::new(
                derive_seed(cfg.simulate.seed, "sw-subsample"),
                n as u64,
                firecox::rng::Lane::Subsample,
            )
            .rng();
            let mut idx = sample(&mut rng, totals.len(), d.sw_max).into_vec();
            idx.sort_unstable();
            (idx.into_iter().map(|i| totals[i]).collect(), true)
        } else {
            (totals.clone(), false)
        };
        let sw = shapiro_wilk(&sw_input)?;
        let var_rate = variance_rate_curve(&[(n, totals.clone())], d.dimension)?.points[0].1;
        per_n.push(PerN {
            n,
            w1: w1.distance,
            sw,
            sw_subsampled: subsampled,
            var_rate,
        });
        all.push((n, totals));
    }
    Ok((per_n, all))
}

pub fn diagnose(mut ctx: RunContext, run_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let field = read_counts(&mut ctx, &run_dir.join("counts.csv"))?;
    let cfg = ctx.config.clone();
    let (per_n, all) = diagnose_field(&cfg, &field)?;
    let d = cfg.diagnose.dimension;
    let w1_points: Vec<(usize, f64)> = per_n.iter().map(|p| (p.n, p.w1)).collect();
    let w1_rate = if w1_points.len() >= 3 {
        Some(rate_comparison(&w1_points, d)?)
    } else {
        None
    };
    let variance_rate = variance_rate_curve(&all, d)?;
    let association = if cfg.diagnose.association_max_r >= 1.0 {
        let spec_path = run_dir.join("spec.json");
        let mask = if spec_path.exists() {
            Some(read_spec(&mut ctx, &spec_path)?.mask)
        } else {
            None
        };
        let opts = CurveOptions {
            max_r: cfg.diagnose.association_max_r,
            seed: derive_seed(cfg.simulate.seed, "pair-subsample"),
            ..CurveOptions::default()
        };
        covariance_curve(&field, mask.as_ref(), opts).ok().map(|c| association_check(&c))
    } else {
        None
    };

    let mut w1 = Table::new(&["n", "w1"]);
    let mut vr = Table::new(&["n", "var_rate"]);
    let mut sw = Table::new(&["n", "sw_p"]);
    for p in &per_n {
        w1.push(vec![p.n.to_string(), real(p.w1)]);
        vr.push(vec![p.n.to_string(), real(p.var_rate)]);
        sw.push(vec![p.n.to_string(), real(p.sw.p_value)]);
    }
    ctx.write_table("w1.csv", w1)?;
    ctx.write_table("var_rate.csv", vr)?;
    ctx.write_table("sw_p.csv", sw)?;
    ctx.write_json(
        "diagnostics.json",
        &DiagnosticsReport {
            replicates: field.n_replicates(),
            anchor: cfg.diagnose.anchor,
            w1_method: "exact integral of |empirical CDF - standard normal CDF| after standardizing with the sample mean and SD",
            per_n,
            w1_rate,
            variance_rate,
            reference_exponent: -rate_exponent(d),
            association,
        },
    )?;
    ctx.finish()
}

#[derive(Serialize)]
struct SweepEntry {
    lambda_c: f64,
    w1: Vec<(usize, f64)>,
    rate: Option<RateCurve>,
}

#[derive(Serialize)]
struct SweepReport {
    replicates: usize,
    seed: u64,
    entries: Vec<SweepEntry>,
}

pub fn sweep_lambda(mut ctx: RunContext, spec_path: &Path, lambdas: &[f64]) -> Result<Vec<PathBuf>, CliError> {
    if lambdas.is_empty() {
        return Err(CliError::Usage("need at least one lambda_c value".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(firecox::Error::Invalid(format!("lambda_c must be >= 0, got {l}")).into());
    }
    let spec = read_spec(&mut ctx, spec_path)?;
    let cfg = ctx.config.clone();
    let g = WeightFunction::ones(&spec.mask);
    let mut table = Table::new(&["lambda_c", "n", "w1"]);
    let mut entries = Vec::new();
    for &lambda_c in lambdas {
        let s = spec.with_lambda_c(lambda_c)?;
        let run = CoxSimulator::new(&s, cfg.simulate.options())?.run(cfg.simulate.replicates, cfg.simulate.seed, &g)?;
        let (per_n, _) = diagnose_field(&cfg, &run.counts)?;
        let w1: Vec<(usize, f64)> = per_n.iter().map(|p| (p.n, p.w1)).collect();
        for (n, w) in &w1 {
            table.push(vec![real(lambda_c), n.to_string(), real(*w)]);
        }
        let rate = if w1.len() >= 3 {
            Some(rate_comparison(&w1, cfg.diagnose.dimension)?)
        } else {
            None
        };
        entries.push(SweepEntry { lambda_c, w1, rate });
    }
    ctx.write_table("sweep.csv", table)?;
    ctx.write_json(
        "sweep.json",
        &SweepReport {
            replicates: cfg.simulate.replicates,
            seed: cfg.simulate.seed,
            entries,
        },
    )?;
    ctx.finish()
}

#[derive(Serialize)]
struct BoundReport {
    points: Vec<BoundPoint>,
    dominance_onset: Option<f64>,
    thresholds: ThresholdReport,
    note: &'static str,
}

#[derive(Serialize)]
struct BoundPoint {
    n: f64,
    breakdown: BoundBreakdown,
}

pub fn bound(mut ctx: RunContext) -> Result<Vec<PathBuf>, CliError> {
    let b = ctx.config.bound.clone();
    let ns = if b.n_points == 1 || b.n_min == b.n_max {
        vec![b.n_min]
    } else {
        log_spaced(b.n_min, b.n_max, b.n_points)?
    };
    let curve = bound_curve(&b.params(ns[0]), &ns)?;
    let thresholds = threshold_report(&b.params(b.n_max))?;
    let mut t = Table::new(&["n", "T1", "T2", "T3", "T4", "total"]);
    for (n, x) in &curve.points {
        t.push(vec![real(*n), real(x.t1), real(x.t2), real(x.t3), real(x.t4), real(x.total)]);
    }
    ctx.write_table("bound.csv", t)?;
    ctx.write_json(
        "bound.json",
        &BoundReport {
            points: curve.points.iter().map(|(n, x)| BoundPoint { n: *n, breakdown: *x }).collect(),
            dominance_onset: curve.dominance_onset,
            thresholds,
            note: "M, gamma, kappa and lambda are user inputs; fitted lambda_c and sigma^2 maps do not determine them",
        },
    )?;
    ctx.finish()
}

pub fn synth(mut ctx: RunContext) -> Result<Vec<PathBuf>, CliError> {
    let lattice = ctx.config.lattice.spec()?;
    let mask = load_mask(&mut ctx, &lattice)?;
    let cfg = ctx.config.clone();
    let s = &cfg.synth;
    let spec = PermanentalSpec::homogeneous(lattice, mask.clone(), s.l, s.sigma2, s.lambda_c)?;
    let data = synth_dataset(&spec, s.years, s.first_year, cfg.simulate.seed, cfg.simulate.options())?;
    ctx.write_table("points.csv", points_table(&data.points))?;
    ctx.write_table("counts.csv", counts_table(&data.field))?;
    let totals: Vec<f64> = mask_totals(&data.field, &mask)?.into_iter().map(|v| v as f64).collect();
    ctx.write_table("totals.csv", totals_table(&totals))?;
    ctx.write_json("truth_spec.json", &spec)?;
    ctx.finish()
}
