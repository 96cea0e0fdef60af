//! Geographic gridding.
//!
//! Latitude and longitude are treated as planar coordinates. A lattice is
//! anchored at its top-left corner; cell `(row, col)` covers the half-open
//! square whose top and left edges are inclusive, so every in-grid point
//! lands in exactly one cell.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid coordinates within one unit of a cell edge are snapped onto it
/// before flooring, so decimal inputs like `19.99` on a `0.01` grid do not
/// fall into the previous cell through binary rounding.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub year: i32,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, year: i32) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid(format!("coordinates out of range: lat {lat}, lon {lon}")));
        }
        Ok(Self { lat, lon, year })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Max-norm distance in grid units.
    pub fn distance(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Latitude of the grid's top edge.
    pub origin_lat: f64,
    /// Longitude of the grid's left edge.
    pub origin_lon: f64,
    /// Cell side in degrees.
    pub unit: f64,
    pub rows: usize,
    pub cols: usize,
}

impl LatticeSpec {
    pub const DEFAULT_UNIT: f64 = 0.01;

    pub fn new(origin_lat: f64, origin_lon: f64, unit: f64, rows: usize, cols: usize) -> Result<Self> {
        let spec = Self {
            origin_lat,
            origin_lon,
            unit,
            rows,
            cols,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A lattice in pure grid units, used by simulations that never touch
    /// geographic coordinates.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        Self::new(0.0, 0.0, Self::DEFAULT_UNIT, rows, cols)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.unit.is_finite() && self.unit > 0.0) {
            return Err(Error::invalid(format!("cell unit must be positive, got {}", self.unit)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("lattice needs at least one row and one column"));
        }
        if !self.origin_lat.is_finite() || !self.origin_lon.is_finite() {
            return Err(Error::invalid("lattice origin must be finite"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn index(&self, cell: Cell) -> usize {
        debug_assert!(cell.row < self.rows && cell.col < self.cols);
        cell.row * self.cols + cell.col
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    /// Top-left corner `(lat, lon)` of a cell.
    pub fn cell_anchor(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin_lat - cell.row as f64 * self.unit,
            self.origin_lon + cell.col as f64 * self.unit,
        )
    }

    /// The cell containing a coordinate, or `None` outside the grid.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<Cell> {
        let row = grid_floor((self.origin_lat - lat) / self.unit)?;
        let col = grid_floor((lon - self.origin_lon) / self.unit)?;
        (row < self.rows && col < self.cols).then_some(Cell::new(row, col))
    }
}

fn grid_floor(t: f64) -> Option<usize> {
    if !t.is_finite() {
        return None;
    }
    let nearest = t.round();
    let snapped = if (t - nearest).abs() < EDGE_SNAP { nearest } else { t.floor() };
    (snapped >= 0.0).then_some(snapped as usize)
}

/// Membership flags over the lattice cells (the study region `Λ_n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMask {
    rows: usize,
    cols: usize,
    flags: Vec<bool>,
    count: usize,
}

impl RegionMask {
    pub fn from_flags(rows: usize, cols: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != rows * cols {
            return Err(Error::invalid(format!("mask has {} flags for a {rows}x{cols} grid", flags.len())));
        }
        let count = flags.iter().filter(|&&f| f).count();
        Ok(Self { rows, cols, flags, count })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            flags: vec![true; rows * cols],
            count: rows * cols,
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            flags: vec![false; rows * cols],
            count: 0,
        }
    }

    /// Axis-aligned rectangle, clipped to the grid.
    pub fn rectangle(rows: usize, cols: usize, top: usize, left: usize, height: usize, width: usize) -> Self {
        let mut flags = vec![false; rows * cols];
        for r in top..(top + height).min(rows) {
            for c in left..(left + width).min(cols) {
                flags[r * cols + c] = true;
            }
        }
        let count = flags.iter().filter(|&&f| f).count();
        Self { rows, cols, flags, count }
    }

    /// The `n x n` block anchored at `anchor`; errors when it leaves the grid.
    pub fn square_block(rows: usize, cols: usize, anchor: Cell, n: usize) -> Result<Self> {
        check_block(rows, cols, anchor, n)?;
        Ok(Self::rectangle(rows, cols, anchor.row, anchor.col, n, n))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of member cells `|Λ_n|`.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.flags[index]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Indices of member cells in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter_map(|(i, &f)| f.then_some(i))
    }

    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                found: (self.rows, self.cols),
            });
        }
        Ok(())
    }
}

/// Nonnegative counts indexed by (cell, replicate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountField {
    rows: usize,
    cols: usize,
    /// Year or simulation iteration of each replicate.
    labels: Vec<i64>,
    /// Replicate-major: `counts[k * cells + cell]`.
    counts: Vec<u32>,
}

impl CountField {
    pub fn zeros(rows: usize, cols: usize, labels: Vec<i64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NoReplicates);
        }
        Ok(Self {
            rows,
            cols,
            counts: vec![0; rows * cols * labels.len()],
            labels,
        })
    }

    /// Builds a field from one count vector per replicate.
    pub fn from_replicates(rows: usize, cols: usize, labels: Vec<i64>, replicates: Vec<Vec<u32>>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NoReplicates);
        }
        if labels.len() != replicates.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} replicates",
                labels.len(),
                replicates.len()
            )));
        }
        let cells = rows * cols;
        let mut counts = Vec::with_capacity(cells * labels.len());
        for (k, rep) in replicates.into_iter().enumerate() {
            if rep.len() != cells {
                return Err(Error::invalid(format!("replicate {k} has {} cells, expected {cells}", rep.len())));
            }
            counts.extend(rep);
        }
        Ok(Self {
            rows,
            cols,
            labels,
            counts,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn n_replicates(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn replicate(&self, k: usize) -> &[u32] {
        let cells = self.cell_count();
        &self.counts[k * cells..(k + 1) * cells]
    }

    pub fn replicate_mut(&mut self, k: usize) -> &mut [u32] {
        let cells = self.cell_count();
        &mut self.counts[k * cells..(k + 1) * cells]
    }

    pub fn get(&self, cell: usize, k: usize) -> u32 {
        self.counts[k * self.cell_count() + cell]
    }

    pub fn replicate_total(&self, k: usize) -> u64 {
        self.replicate(k).iter().map(|&c| u64::from(c)).sum()
    }

    /// Column `cell` across replicates, as reals.
    pub fn cell_series(&self, cell: usize) -> Vec<f64> {
        (0..self.n_replicates()).map(|k| f64::from(self.get(cell, k))).collect()
    }

    /// Reorders replicates by `order` (a permutation of `0..R`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        for (dst, &src) in order.iter().enumerate() {
            out.labels[dst] = self.labels[src];
            out.replicate_mut(dst).copy_from_slice(self.replicate(src));
        }
        out
    }
}

/// Tallies produced while binning point records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub in_grid: u64,
    pub out_of_grid: u64,
    /// In-grid points per year.
    pub per_year: BTreeMap<i32, u64>,
    /// Out-of-grid points per year.
    pub skipped_per_year: BTreeMap<i32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Binned {
    pub field: CountField,
    pub report: IngestReport,
}

/// Bins points into cells, one replicate per distinct year.
pub fn bin_points(points: &[GeoPoint], spec: &LatticeSpec) -> Result<Binned> {
    let mut years: Vec<i32> = points.iter().map(|p| p.year).collect();
    years.sort_unstable();
    years.dedup();
    bin_points_with_years(points, spec, &years)
}

/// Like [`bin_points`], with an explicit replicate list so years without any
/// record still produce an all-zero replicate. Points from years not in the
/// list are reported as skipped.
pub fn bin_points_with_years(points: &[GeoPoint], spec: &LatticeSpec, years: &[i32]) -> Result<Binned> {
    spec.validate()?;
    if years.is_empty() {
        return Err(Error::NoReplicates);
    }
    let mut years = years.to_vec();
    years.sort_unstable();
    years.dedup();
    let slot: BTreeMap<i32, usize> = years.iter().enumerate().map(|(k, &y)| (y, k)).collect();

    let mut field = CountField::zeros(spec.rows, spec.cols, years.iter().map(|&y| i64::from(y)).collect())?;
    let mut report = IngestReport::default();
    for &y in &years {
        report.per_year.insert(y, 0);
    }
    for p in points {
        match (slot.get(&p.year), spec.locate(p.lat, p.lon)) {
            (Some(&k), Some(cell)) => {
                let idx = spec.index(cell);
                field.replicate_mut(k)[idx] += 1;
                report.in_grid += 1;
                *report.per_year.entry(p.year).or_default() += 1;
            }
            _ => {
                report.out_of_grid += 1;
                *report.skipped_per_year.entry(p.year).or_default() += 1;
            }
        }
    }
    Ok(Binned { field, report })
}

fn check_block(rows: usize, cols: usize, anchor: Cell, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("block side must be positive"));
    }
    if anchor.row + n > rows || anchor.col + n > cols {
        return Err(Error::BlockOutOfBounds {
            n,
            row: anchor.row,
            col: anchor.col,
            rows,
            cols,
            fit_rows: rows.saturating_sub(anchor.row).min(n),
            fit_cols: cols.saturating_sub(anchor.col).min(n),
        });
    }
    Ok(())
}

/// Per-replicate sums over the `n x n` block anchored at `anchor`.
pub fn block_totals(field: &CountField, n: usize, anchor: Cell) -> Result<Vec<u64>> {
    let (rows, cols) = field.dims();
    check_block(rows, cols, anchor, n)?;
    Ok((0..field.n_replicates())
        .map(|k| {
            let rep = field.replicate(k);
            (anchor.row..anchor.row + n)
                .map(|r| {
                    let start = r * cols + anchor.col;
                    rep[start..start + n].iter().map(|&c| u64::from(c)).sum::<u64>()
                })
                .sum()
        })
        .collect())
}

/// Per-replicate sums over the cells of `mask`.
pub fn mask_totals(field: &CountField, mask: &RegionMask) -> Result<Vec<u64>> {
    let (rows, cols) = field.dims();
    mask.check_dims(rows, cols)?;
    let idx: Vec<usize> = mask.indices().collect();
    Ok((0..field.n_replicates())
        .map(|k| {
            let rep = field.replicate(k);
            idx.iter().map(|&i| u64::from(rep[i])).sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(20.0, 100.0, 0.01, 4, 5).unwrap()
    }

    #[test]
    fn three_points_in_one_cell() {
        let pts = vec![
            GeoPoint::new(19.995, 100.005, 2010).unwrap(),
            GeoPoint::new(19.991, 100.009, 2010).unwrap(),
            GeoPoint::new(19.999, 100.001, 2010).unwrap(),
        ];
        let b = bin_points(&pts, &spec()).unwrap();
        assert_eq!(b.field.n_replicates(), 1);
        assert_eq!(b.field.get(0, 0), 3);
        assert_eq!(b.field.replicate_total(0), 3);
        assert_eq!(b.report.in_grid, 3);
    }

    #[test]
    fn shared_edges_go_to_one_cell() {
        let s = spec();
        // top edge of row 1 and left edge of col 2
        assert_eq!(s.locate(19.99, 100.02), Some(Cell::new(1, 2)));
        // the grid's own top-left corner is inside
        assert_eq!(s.locate(20.0, 100.0), Some(Cell::new(0, 0)));
        // bottom and right boundaries are exclusive
        assert_eq!(s.locate(19.96, 100.0), None);
        assert_eq!(s.locate(20.0, 100.05), None);
        assert_eq!(s.locate(20.0001, 100.0), None);
    }

    #[test]
    fn two_years_two_replicates() {
        let pts = vec![
            GeoPoint::new(19.995, 100.005, 2008).unwrap(),
            GeoPoint::new(19.975, 100.035, 2007).unwrap(),
            GeoPoint::new(19.975, 100.036, 2007).unwrap(),
        ];
        let b = bin_points(&pts, &spec()).unwrap();
        assert_eq!(b.field.labels(), &[2007, 2008]);
        assert_eq!(b.field.replicate_total(0), 2);
        assert_eq!(b.field.replicate_total(1), 1);
    }

    #[test]
    fn out_of_grid_points_are_reported() {
        let pts = vec![
            GeoPoint::new(19.995, 100.005, 2008).unwrap(),
            GeoPoint::new(10.0, 100.005, 2008).unwrap(),
        ];
        let b = bin_points(&pts, &spec()).unwrap();
        assert_eq!(b.report.in_grid, 1);
        assert_eq!(b.report.out_of_grid, 1);
        assert_eq!(b.field.replicate_total(0), 1);
    }

    #[test]
    fn empty_input_without_years_is_an_error() {
        assert!(matches!(bin_points(&[], &spec()), Err(Error::NoReplicates)));
        let b = bin_points_with_years(&[], &spec(), &[2001]).unwrap();
        assert_eq!(b.field.replicate_total(0), 0);
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(91.0, 0.0, 2000).is_err());
        assert!(GeoPoint::new(0.0, -180.5, 2000).is_err());
        assert!(LatticeSpec::new(0.0, 0.0, 0.0, 1, 1).is_err());
        assert!(LatticeSpec::new(0.0, 0.0, 0.01, 0, 1).is_err());
    }

    fn ones(rows: usize, cols: usize, reps: usize) -> CountField {
        CountField::from_replicates(rows, cols, (0..reps as i64).collect(), vec![vec![1; rows * cols]; reps]).unwrap()
    }

    #[test]
    fn block_totals_basics() {
        let f = ones(5, 5, 2);
        assert_eq!(block_totals(&f, 3, Cell::new(1, 1)).unwrap(), vec![9, 9]);
        let mut g = f.clone();
        g.replicate_mut(1)[2 * 5 + 3] = 7;
        assert_eq!(block_totals(&g, 1, Cell::new(2, 3)).unwrap(), vec![1, 7]);
        match block_totals(&f, 3, Cell::new(3, 0)) {
            Err(Error::BlockOutOfBounds { fit_rows, fit_cols, .. }) => {
                assert_eq!((fit_rows, fit_cols), (2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mask_totals_basics() {
        let f = ones(4, 6, 3);
        assert_eq!(mask_totals(&f, &RegionMask::full(4, 6)).unwrap(), vec![24; 3]);
        assert_eq!(mask_totals(&f, &RegionMask::empty(4, 6)).unwrap(), vec![0; 3]);
        let block = RegionMask::square_block(4, 6, Cell::new(1, 2), 3).unwrap();
        assert_eq!(block.len(), 9);
        assert_eq!(mask_totals(&f, &block).unwrap(), block_totals(&f, 3, Cell::new(1, 2)).unwrap());
        assert!(matches!(
            mask_totals(&f, &RegionMask::full(4, 5)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn binning_conserves_mass(
            pts in prop::collection::vec((19.9f64..20.05, 99.98f64..100.07, 2000i32..2003), 0..60)
        ) {
            let s = spec();
            let points: Vec<GeoPoint> = pts.iter().map(|&(a, b, y)| GeoPoint { lat: a, lon: b, year: y }).collect();
            let b = bin_points_with_years(&points, &s, &[2000, 2001, 2002]).unwrap();
            let in_grid = points.iter().filter(|p| s.locate(p.lat, p.lon).is_some()).count() as u64;
            prop_assert_eq!(b.report.in_grid, in_grid);
            prop_assert_eq!(b.report.in_grid + b.report.out_of_grid, points.len() as u64);
            for (k, &y) in [2000, 2001, 2002].iter().enumerate() {
                let expect = points.iter().filter(|p| p.year == y && s.locate(p.lat, p.lon).is_some()).count() as u64;
                prop_assert_eq!(b.field.replicate_total(k), expect);
            }
        }

        #[test]
        fn disjoint_tiling_matches_full_mask(
            vals in prop::collection::vec(0u32..20, 36 * 2)
        ) {
            let f = CountField::from_replicates(6, 6, vec![0, 1], vec![vals[..36].to_vec(), vals[36..].to_vec()]).unwrap();
            let mut tiled = vec![0u64; 2];
            for r in (0..6).step_by(3) {
                for c in (0..6).step_by(3) {
                    for (t, v) in tiled.iter_mut().zip(block_totals(&f, 3, Cell::new(r, c)).unwrap()) {
                        *t += v;
                    }
                }
            }
            prop_assert_eq!(tiled, mask_totals(&f, &RegionMask::full(6, 6)).unwrap());
        }
    }
}
