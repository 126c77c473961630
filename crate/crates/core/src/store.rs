//! Day files of depth-20 snapshots: parsing, quality filtering and canonical
//! re-emission.
//!
//! Two on-disk layouts are supported:
//!
//! * CSV with the 81-column header from [`csv_header`]:
//!   `timestamp_ns, bid_px_0..19, bid_sz_0..19, ask_px_0..19, ask_sz_0..19`.
//!   An empty cell marks a missing level.
//! * `LOBD1` binary: the 5-byte magic followed by little-endian records of one
//!   `u64` timestamp and 80 `f64` values in the CSV column order.
//!
//! Files are named `YYYYMMDD.csv` / `YYYYMMDD.lobd`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::DEPTH;

pub const BINARY_MAGIC: &[u8; 5] = b"LOBD1";
const VALUES_PER_ROW: usize = 4 * DEPTH;
const RECORD_BYTES: usize = 8 + 8 * VALUES_PER_ROW;
/// Rows whose prices leave `[median_mid / BAND, median_mid * BAND]` are dropped.
const PRICE_BAND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BookLevel {
    pub price: f64,
    pub size: f64,
}

impl BookLevel {
    pub const fn new(price: f64, size: f64) -> Self {
        Self { price, size }
    }

    fn is_present(&self) -> bool {
        self.price.is_finite() && self.price > 0.0 && self.size.is_finite()
    }
}

pub type Ladder = [BookLevel; DEPTH];

/// One timestamped two-sided book, best level first on each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub timestamp_ns: u64,
    pub bids: Ladder,
    pub asks: Ladder,
}

impl Snapshot {
    pub fn best_bid(&self) -> f64 {
        self.bids[0].price
    }

    pub fn best_ask(&self) -> f64 {
        self.asks[0].price
    }

    pub fn mid_price(&self) -> f64 {
        mid_price(self)
    }

    pub fn bid_size_total(&self) -> f64 {
        self.bids.iter().map(|l| l.size).sum()
    }

    pub fn ask_size_total(&self) -> f64 {
        self.asks.iter().map(|l| l.size).sum()
    }

    /// Checks the positive-spread and ladder-monotonicity invariants.
    pub fn validate(&self) -> std::result::Result<(), SnapshotDefect> {
        let (bid, ask) = (self.best_bid(), self.best_ask());
        if !(bid.is_finite() && bid > 0.0 && ask.is_finite() && ask > 0.0) {
            return Err(SnapshotDefect::InvalidTop);
        }
        if ask <= bid {
            return Err(SnapshotDefect::NonPositiveSpread);
        }
        let sizes_ok = self
            .bids
            .iter()
            .chain(self.asks.iter())
            .all(|l| l.size.is_finite() && l.size >= 0.0);
        if !sizes_ok
            || !is_monotone(&self.bids, |prev, next| next < prev)
            || !is_monotone(&self.asks, |prev, next| next > prev)
        {
            return Err(SnapshotDefect::InvalidLadder);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotDefect {
    InvalidTop,
    NonPositiveSpread,
    InvalidLadder,
}

fn is_monotone(ladder: &Ladder, ordered: impl Fn(f64, f64) -> bool) -> bool {
    let mut prev: Option<f64> = None;
    for level in ladder.iter().filter(|l| l.size > 0.0) {
        if !(level.price.is_finite() && level.price > 0.0) {
            return false;
        }
        if let Some(p) = prev {
            if !ordered(p, level.price) {
                return false;
            }
        }
        prev = Some(level.price);
    }
    true
}

/// Arithmetic mean of best bid and best ask.
pub fn mid_price(s: &Snapshot) -> f64 {
    0.5 * (s.best_bid() + s.best_ask())
}

/// Completes a partial ladder to [`DEPTH`] levels.
///
/// Entries past the end of `raw`, and entries without a finite positive price
/// or a finite size, are replaced by a zero-size level priced at the last
/// present price on that side. Returns `None` when the first level is missing.
pub fn forward_fill_levels(raw: &[BookLevel]) -> Option<Ladder> {
    let first = raw.first().filter(|l| l.is_present())?;
    let mut out = [BookLevel::default(); DEPTH];
    let mut last_price = first.price;
    for (i, slot) in out.iter_mut().enumerate() {
        match raw.get(i).filter(|l| l.is_present()) {
            Some(level) => {
                *slot = *level;
                last_price = level.price;
            }
            None => *slot = BookLevel::new(last_price, 0.0),
        }
    }
    Some(out)
}

/// Counters describing what the quality filters did to one file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    pub rows_dropped_duplicate_ts: usize,
    pub rows_dropped_invalid_top: usize,
    pub rows_dropped_nonpositive_spread: usize,
    pub rows_dropped_invalid_ladder: usize,
    pub rows_dropped_price_band: usize,
    /// Individual size cells clipped from negative to zero.
    pub values_clipped: usize,
}

impl QualityReport {
    pub fn rows_dropped(&self) -> usize {
        self.rows_dropped_duplicate_ts
            + self.rows_dropped_invalid_top
            + self.rows_dropped_nonpositive_spread
            + self.rows_dropped_invalid_ladder
            + self.rows_dropped_price_band
    }

    pub fn reconciles(&self) -> bool {
        self.rows_in == self.rows_kept + self.rows_dropped()
    }
}

/// One calendar day of snapshots with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct DayBook {
    date: NaiveDate,
    snapshots: Vec<Snapshot>,
}

impl DayBook {
    /// Builds a day from already-clean snapshots, checking every invariant.
    pub fn new(date: NaiveDate, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Data(format!("{date}: empty day")));
        }
        for (i, s) in snapshots.iter().enumerate() {
            if let Err(defect) = s.validate() {
                return Err(Error::Data(format!("{date}: snapshot {i} is invalid ({defect:?})")));
            }
            if i > 0 && snapshots[i - 1].timestamp_ns >= s.timestamp_ns {
                return Err(Error::Data(format!(
                    "{date}: timestamps not strictly increasing at snapshot {i}"
                )));
            }
        }
        Ok(Self { date, snapshots })
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Snapshot> {
        self.snapshots.get(index)
    }

    pub fn first_timestamp(&self) -> u64 {
        self.snapshots[0].timestamp_ns
    }

    pub fn last_timestamp(&self) -> u64 {
        self.snapshots[self.snapshots.len() - 1].timestamp_ns
    }

    /// Smallest index whose timestamp is `>= t`.
    pub fn index_at_or_after(&self, t: u64) -> Result<usize> {
        let last = self.last_timestamp();
        if t > last {
            return Err(Error::BeyondDayEnd { t, last });
        }
        Ok(self.snapshots.partition_point(|s| s.timestamp_ns < t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Csv => "csv",
            FileFormat::Binary => "lobd",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(FileFormat::Csv),
            "lobd" => Some(FileFormat::Binary),
            _ => None,
        }
    }
}

/// Parses the `YYYYMMDD` file stem.
pub fn date_from_path(path: &Path) -> Result<NaiveDate> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Data(format!("{}: no file name", path.display())))?;
    NaiveDate::parse_from_str(stem, "%Y%m%d")
        .map_err(|_| Error::Data(format!("{}: file name is not YYYYMMDD", path.display())))
}

pub fn file_name_for(date: NaiveDate, format: FileFormat) -> String {
    format!("{}.{}", date.format("%Y%m%d"), format.extension())
}

pub fn csv_header() -> Vec<String> {
    let mut cols = vec!["timestamp_ns".to_string()];
    for prefix in ["bid_px", "bid_sz", "ask_px", "ask_sz"] {
        cols.extend((0..DEPTH).map(|i| format!("{prefix}_{i}")));
    }
    cols
}

struct RawRow {
    timestamp_ns: u64,
    values: [f64; VALUES_PER_ROW],
}

/// Loads, filters and sorts one day file.
pub fn load_day(path: &Path, format: FileFormat) -> Result<(DayBook, QualityReport)> {
    let date = date_from_path(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let rows = match format {
        FileFormat::Csv => read_csv_rows(reader, path)?,
        FileFormat::Binary => read_binary_rows(reader, path)?,
    };
    let (snapshots, report) = filter_rows(rows);
    if snapshots.is_empty() {
        return Err(Error::EmptyDay(path.to_path_buf()));
    }
    Ok((DayBook { date, snapshots }, report))
}

/// Like [`load_day`] but picks the format from the file extension.
pub fn load_day_auto(path: &Path) -> Result<(DayBook, QualityReport)> {
    let format = FileFormat::from_path(path)
        .ok_or_else(|| Error::Data(format!("{}: unknown day-file extension", path.display())))?;
    load_day(path, format)
}

/// Parses a day from an in-memory CSV document (mainly for tests and ingest).
pub fn parse_csv_day(date: NaiveDate, bytes: &[u8]) -> Result<(DayBook, QualityReport)> {
    let pseudo = PathBuf::from(file_name_for(date, FileFormat::Csv));
    let rows = read_csv_rows(bytes, &pseudo)?;
    let (snapshots, report) = filter_rows(rows);
    if snapshots.is_empty() {
        return Err(Error::EmptyDay(pseudo));
    }
    Ok((DayBook { date, snapshots }, report))
}

fn read_csv_rows<R: Read>(reader: R, path: &Path) -> Result<Vec<RawRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let expected = csv_header();
    let header = rdr.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    if header.len() != expected.len() {
        return Err(Error::ColumnCount {
            path: path.to_path_buf(),
            line: 1,
            expected: expected.len(),
            found: header.len(),
        });
    }
    if let Some((i, (got, want))) = header
        .iter()
        .zip(expected.iter())
        .enumerate()
        .find(|(_, (g, w))| g.trim() != w.as_str())
    {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("column {i} is '{got}', expected '{want}'"),
        });
    }

    let mut rows = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| csv_error(path, 0, e))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != expected.len() {
            return Err(Error::ColumnCount {
                path: path.to_path_buf(),
                line,
                expected: expected.len(),
                found: record.len(),
            });
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let ts_field = record[0].trim();
        let timestamp_ns = ts_field
            .parse::<u64>()
            .map_err(|_| parse_err(format!("bad timestamp '{ts_field}'")))?;
        let mut values = [f64::NAN; VALUES_PER_ROW];
        for (slot, field) in values.iter_mut().zip(record.iter().skip(1)) {
            let field = field.trim();
            if !field.is_empty() {
                *slot = field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad number '{field}'")))?;
            }
        }
        rows.push(RawRow { timestamp_ns, values });
    }
    Ok(rows)
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    let line = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn read_binary_rows<R: Read>(mut reader: R, path: &Path) -> Result<Vec<RawRow>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let body = bytes
        .strip_prefix(BINARY_MAGIC.as_slice())
        .ok_or_else(|| Error::Data(format!("{}: missing LOBD1 magic", path.display())))?;
    if body.len() % RECORD_BYTES != 0 {
        return Err(Error::Data(format!(
            "{}: truncated record ({} trailing bytes)",
            path.display(),
            body.len() % RECORD_BYTES
        )));
    }
    let rows = body
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let timestamp_ns = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let mut values = [0.0; VALUES_PER_ROW];
            for (slot, chunk) in values.iter_mut().zip(rec[8..].chunks_exact(8)) {
                *slot = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            RawRow { timestamp_ns, values }
        })
        .collect();
    Ok(rows)
}

fn filter_rows(mut rows: Vec<RawRow>) -> (Vec<Snapshot>, QualityReport) {
    let mut report = QualityReport {
        rows_in: rows.len(),
        ..Default::default()
    };
    // Stable, so the first occurrence of a duplicated timestamp survives.
    rows.sort_by_key(|r| r.timestamp_ns);
    let mut median = RunningMedian::default();
    let mut out: Vec<Snapshot> = Vec::with_capacity(rows.len());
    let mut last_ts: Option<u64> = None;

    for row in rows {
        if last_ts == Some(row.timestamp_ns) {
            report.rows_dropped_duplicate_ts += 1;
            continue;
        }
        last_ts = Some(row.timestamp_ns);

        let mut values = row.values;
        for side in [1, 3] {
            for v in &mut values[side * DEPTH..(side + 1) * DEPTH] {
                if *v < 0.0 {
                    *v = 0.0;
                    report.values_clipped += 1;
                }
            }
        }
        let side = |px: usize, sz: usize| -> Vec<BookLevel> {
            (0..DEPTH)
                .map(|i| BookLevel::new(values[px * DEPTH + i], values[sz * DEPTH + i]))
                .collect()
        };
        let (Some(bids), Some(asks)) = (forward_fill_levels(&side(0, 1)), forward_fill_levels(&side(2, 3))) else {
            report.rows_dropped_invalid_top += 1;
            continue;
        };
        let snap = Snapshot {
            timestamp_ns: row.timestamp_ns,
            bids,
            asks,
        };
        match snap.validate() {
            Err(SnapshotDefect::InvalidTop) => {
                report.rows_dropped_invalid_top += 1;
                continue;
            }
            Err(SnapshotDefect::NonPositiveSpread) => {
                report.rows_dropped_nonpositive_spread += 1;
                continue;
            }
            Err(SnapshotDefect::InvalidLadder) => {
                report.rows_dropped_invalid_ladder += 1;
                continue;
            }
            Ok(()) => {}
        }
        if let Some(reference) = median.median() {
            let (lo, hi) = (reference / PRICE_BAND, reference * PRICE_BAND);
            let outside = snap
                .bids
                .iter()
                .chain(snap.asks.iter())
                .filter(|l| l.size > 0.0)
                .any(|l| l.price < lo || l.price > hi);
            if outside {
                report.rows_dropped_price_band += 1;
                continue;
            }
        }
        median.push(snap.mid_price());
        out.push(snap);
    }
    report.rows_kept = out.len();
    (out, report)
}

/// Writes the canonical CSV form. Floats use the shortest representation
/// that parses back to the same bits, so reloading is lossless.
pub fn write_csv<W: Write>(day: &DayBook, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{}", csv_header().join(","))?;
    for s in day.snapshots() {
        write!(w, "{}", s.timestamp_ns)?;
        for ladder in [&s.bids, &s.asks] {
            for l in ladder.iter() {
                write!(w, ",{}", l.price)?;
            }
            for l in ladder.iter() {
                write!(w, ",{}", l.size)?;
            }
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_binary<W: Write>(day: &DayBook, writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(BINARY_MAGIC)?;
    for s in day.snapshots() {
        w.write_all(&s.timestamp_ns.to_le_bytes())?;
        for ladder in [&s.bids, &s.asks] {
            for l in ladder.iter() {
                w.write_all(&l.price.to_le_bytes())?;
            }
            for l in ladder.iter() {
                w.write_all(&l.size.to_le_bytes())?;
            }
        }
    }
    w.flush()
}

/// Writes `day` into `dir` under its canonical file name and returns the path.
pub fn save_day(day: &DayBook, dir: &Path, format: FileFormat) -> Result<PathBuf> {
    let path = dir.join(file_name_for(day.date(), format));
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    match format {
        FileFormat::Csv => write_csv(day, file),
        FileFormat::Binary => write_binary(day, file),
    }
    .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Lists day files (`YYYYMMDD.csv|lobd`) in `dir`, sorted by date.
pub fn list_day_files(dir: &Path) -> Result<Vec<(NaiveDate, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if FileFormat::from_path(&path).is_none() {
            continue;
        }
        if let Ok(date) = date_from_path(&path) {
            files.push((date, path));
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming median over two heaps.
#[derive(Debug, Default)]
struct RunningMedian {
    low: BinaryHeap<Ordered>,
    high: BinaryHeap<std::cmp::Reverse<Ordered>>,
}

impl RunningMedian {
    fn push(&mut self, x: f64) {
        match self.low.peek() {
            Some(top) if x > top.0 => self.high.push(std::cmp::Reverse(Ordered(x))),
            _ => self.low.push(Ordered(x)),
        }
        if self.low.len() > self.high.len() + 1 {
            let v = self.low.pop().unwrap();
            self.high.push(std::cmp::Reverse(v));
        } else if self.high.len() > self.low.len() {
            let v = self.high.pop().unwrap().0;
            self.low.push(v);
        }
    }

    fn median(&self) -> Option<f64> {
        let lo = self.low.peek()?.0;
        if self.low.len() > self.high.len() {
            Some(lo)
        } else {
            Some(0.5 * (lo + self.high.peek().unwrap().0 .0))
        }
    }
}
