//! CSV artifacts.
//!
//! Every file may start with `# key: value` comment lines (provenance such
//! as the producing config's hash), followed by a header row. Reals are
//! written with Rust's shortest round-trip formatting, so identical inputs
//! give byte-identical files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CountField, GeoPoint, RegionMask};

/// `# key: value` lines preceding the header.
pub type Comments = Vec<(String, String)>;

fn split_comments(text: &str) -> (Comments, &str) {
    let mut comments = Vec::new();
    let mut rest = text;
    while let Some(line) = rest.strip_prefix('#') {
        let (line, tail) = match line.find('\n') {
            Some(i) => (&line[..i], &line[i + 1..]),
            None => (line, ""),
        };
        let line = line.trim_end_matches('\r').trim();
        let (k, v) = line.split_once(':').unwrap_or((line, ""));
        comments.push((k.trim().to_string(), v.trim().to_string()));
        rest = tail;
    }
    (comments, rest)
}

pub fn comment_value<'a>(comments: &'a Comments, key: &str) -> Option<&'a str> {
    comments.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

/// A header plus rows of already-formatted cells.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub comments: Comments,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_comments(mut self, comments: Comments) -> Self {
        self.comments = comments;
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.comments {
            writeln!(w, "# {k}: {v}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let (comments, body) = split_comments(&text);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { comments, header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("missing column `{name}`")))
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("line {line}: cannot parse {what} from `{s}`")))
}

/// A record that could not be read, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsRead {
    pub points: Vec<GeoPoint>,
    pub malformed: Vec<MalformedRow>,
}

impl PointsRead {
    pub fn malformed_fraction(&self) -> f64 {
        let total = self.points.len() + self.malformed.len();
        if total == 0 {
            0.0
        } else {
            self.malformed.len() as f64 / total as f64
        }
    }
}

/// Reads `lat,lon,year` records. Malformed rows are collected, not fatal;
/// a file with no records at all is an error.
pub fn read_points<R: Read>(r: R) -> Result<PointsRead> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::invalid("points file is empty"));
    }
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::invalid(format!("points file lacks a `{name}` column")))
    };
    let (ilat, ilon, iyear) = (col("lat")?, col("lon")?, col("year")?);
    let mut points = Vec::new();
    let mut malformed = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                malformed.push(MalformedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let parsed = (|| -> Result<GeoPoint> {
            let get = |i: usize| rec.get(i).ok_or_else(|| Error::invalid("missing field"));
            let lat: f64 = parse(get(ilat)?, "lat", line as usize)?;
            let lon: f64 = parse(get(ilon)?, "lon", line as usize)?;
            let year: i32 = parse(get(iyear)?, "year", line as usize)?;
            GeoPoint::new(lat, lon, year)
        })();
        match parsed {
            Ok(p) => points.push(p),
            Err(e) => malformed.push(MalformedRow {
                line,
                reason: e.to_string(),
            }),
        }
    }
    if points.is_empty() && malformed.is_empty() {
        return Err(Error::invalid("points file has no records"));
    }
    Ok(PointsRead { points, malformed })
}

pub fn points_table(points: &[GeoPoint]) -> Table {
    let mut t = Table::new(&["lat", "lon", "year"]);
    for p in points {
        t.push(vec![p.lat.to_string(), p.lon.to_string(), p.year.to_string()]);
    }
    t
}

/// Sparse `row,col,replicate,count` table (nonzero counts only). The grid
/// shape and replicate labels go into the `grid` and `labels` comments.
pub fn counts_table(field: &CountField) -> Table {
    let (rows, cols) = field.dims();
    let labels: Vec<String> = field.labels().iter().map(i64::to_string).collect();
    let mut t = Table::new(&["row", "col", "replicate", "count"])
        .with_comments(vec![("grid".into(), format!("{rows} {cols}")), ("labels".into(), labels.join(" "))]);
    for (k, label) in labels.iter().enumerate() {
        for (i, &c) in field.replicate(k).iter().enumerate() {
            if c > 0 {
                t.push(vec![(i / cols).to_string(), (i % cols).to_string(), label.clone(), c.to_string()]);
            }
        }
    }
    t
}

fn grid_comment(t: &Table) -> Result<(usize, usize)> {
    let g = comment_value(&t.comments, "grid").ok_or_else(|| Error::invalid("missing `# grid: rows cols` comment"))?;
    let mut it = g.split_whitespace();
    match (it.next(), it.next()) {
        (Some(r), Some(c)) => Ok((parse(r, "grid rows", 0)?, parse(c, "grid cols", 0)?)),
        _ => Err(Error::invalid(format!("bad grid comment `{g}`"))),
    }
}

pub fn counts_from_table(t: &Table) -> Result<CountField> {
    let (rows, cols) = grid_comment(t)?;
    let labels: Vec<i64> = comment_value(&t.comments, "labels")
        .ok_or_else(|| Error::invalid("missing `# labels:` comment"))?
        .split_whitespace()
        .map(|s| parse(s, "label", 0))
        .collect::<Result<_>>()?;
    let slot: std::collections::HashMap<i64, usize> = labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
    if slot.len() != labels.len() {
        return Err(Error::invalid("duplicate replicate labels"));
    }
    let mut field = CountField::zeros(rows, cols, labels)?;
    let (ir, ic, ik, in_) = (t.column("row")?, t.column("col")?, t.column("replicate")?, t.column("count")?);
    for (line, r) in t.rows.iter().enumerate() {
        let line = line + 2 + t.comments.len();
        let row: usize = parse(&r[ir], "row", line)?;
        let col: usize = parse(&r[ic], "col", line)?;
        let label: i64 = parse(&r[ik], "replicate", line)?;
        let count: u32 = parse(&r[in_], "count", line)?;
        if row >= rows || col >= cols {
            return Err(Error::invalid(format!(
                "line {line}: cell ({row}, {col}) outside the {rows}x{cols} grid"
            )));
        }
        let k = *slot
            .get(&label)
            .ok_or_else(|| Error::invalid(format!("line {line}: unknown replicate {label}")))?;
        field.replicate_mut(k)[row * cols + col] = count;
    }
    Ok(field)
}

/// `row,col` of the active cells, grid shape in the `grid` comment.
pub fn mask_table(mask: &RegionMask) -> Table {
    let (rows, cols) = mask.dims();
    let mut t = Table::new(&["row", "col"]).with_comments(vec![("grid".into(), format!("{rows} {cols}"))]);
    for i in mask.indices() {
        t.push(vec![(i / cols).to_string(), (i % cols).to_string()]);
    }
    t
}

pub fn mask_from_table(t: &Table) -> Result<RegionMask> {
    let (rows, cols) = grid_comment(t)?;
    let (ir, ic) = (t.column("row")?, t.column("col")?);
    let mut flags = vec![false; rows * cols];
    for (line, r) in t.rows.iter().enumerate() {
        let line = line + 2 + t.comments.len();
        let row: usize = parse(&r[ir], "row", line)?;
        let col: usize = parse(&r[ic], "col", line)?;
        if row >= rows || col >= cols {
            return Err(Error::invalid(format!("line {line}: cell ({row}, {col}) outside the grid")));
        }
        flags[row * cols + col] = true;
    }
    RegionMask::from_flags(rows, cols, flags)
}

/// Reads a real-valued column.
pub fn real_column(t: &Table, name: &str) -> Result<Vec<f64>> {
    let i = t.column(name)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(line, r)| parse(&r[i], name, line + 2 + t.comments.len()))
        .collect()
}
