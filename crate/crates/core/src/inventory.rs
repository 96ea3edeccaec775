//! Recording inventory: recursive discovery of audio files, ARU filename
//! parsing, and the inventory CSV.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, Utc};
use rayon::prelude::*;
use thiserror::Error;
use walkdir::WalkDir;

use crate::csvio;
use crate::media_io;
use crate::numfmt::format_fixed;

pub const INVENTORY_HEADER: [&str; 7] = [
    "path",
    "size_bytes",
    "site",
    "station",
    "start_time",
    "duration_s",
    "status",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("target directory {0} does not exist or is not a directory")]
    TargetMissing(PathBuf),
    #[error("inventory header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("inventory line {line}: {reason}")]
    RowParseFailure { line: u64, reason: String },
    #[error("inventory i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileStatus {
    Ok,
    Unreadable,
    UnparseableName,
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileStatus::Ok => "OK",
            FileStatus::Unreadable => "UNREADABLE",
            FileStatus::UnparseableName => "UNPARSEABLE_NAME",
        })
    }
}

impl FromStr for FileStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(FileStatus::Ok),
            "UNREADABLE" => Ok(FileStatus::Unreadable),
            "UNPARSEABLE_NAME" => Ok(FileStatus::UnparseableName),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// Deployment identifiers and start time recovered from a recording's name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedName {
    pub site: String,
    pub station: Option<String>,
    pub start_time: NaiveDateTime,
}

/// One discovered audio file. `None` fields are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct FileRecord {
    /// Relative to the scanned directory, `/`-separated.
    pub path: String,
    pub size_bytes: u64,
    pub site: Option<String>,
    pub station: Option<String>,
    pub start_time: Option<NaiveDateTime>,
    /// Seconds, rounded to the millisecond so the CSV form is lossless.
    pub duration: f64,
    pub status: FileStatus,
}

impl FileRecord {
    /// File name without directories or extension.
    pub fn stem(&self) -> &str {
        let name = self.path.rsplit('/').next().unwrap_or(&self.path);
        match name.rfind('.') {
            Some(i) if i > 0 => &name[..i],
            _ => name,
        }
    }

    /// Whether the file decoded far enough to be processed.
    pub fn is_readable(&self) -> bool {
        self.status != FileStatus::Unreadable
    }
}

/// Sorted, duplicate-free set of file records for one target directory.
#[derive(Debug, Clone)]
pub struct Inventory {
    pub records: Vec<FileRecord>,
    pub target_dir: PathBuf,
    pub created_at: DateTime<Utc>,
    total_duration: f64,
}

/// Equality covers the records only; `target_dir` and `created_at` describe
/// the run that produced them.
impl PartialEq for Inventory {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Inventory {
    /// Builds an inventory, sorting records byte-wise by path and keeping the
    /// first record for any repeated path.
    pub fn new(mut records: Vec<FileRecord>, target_dir: impl Into<PathBuf>) -> Self {
        records.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
        records.dedup_by(|later, earlier| later.path == earlier.path);
        let total_duration = records.iter().map(|r| r.duration).sum();
        Self {
            records,
            target_dir: target_dir.into(),
            created_at: Utc::now(),
            total_duration,
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, rel_path: &str) -> Option<&FileRecord> {
        self.records
            .binary_search_by(|r| r.path.as_bytes().cmp(rel_path.as_bytes()))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn absolute_path(&self, record: &FileRecord) -> PathBuf {
        self.target_dir.join(&record.path)
    }
}

fn parse_digits<T: FromStr>(s: &str) -> Option<T> {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        s.parse().ok()
    } else {
        None
    }
}

/// Parses `<site[-station]>_<YYYYMMDD>_<HHMMSS>.<ext>`. Returns `None` for
/// any name that does not match or carries an impossible date or time.
pub fn parse_filename(name: &str) -> Option<ParsedName> {
    let (base, ext) = name.rsplit_once('.')?;
    if ext.is_empty() {
        return None;
    }
    let (rest, time) = base.rsplit_once('_')?;
    let (prefix, date) = rest.rsplit_once('_')?;
    if prefix.is_empty() || date.len() != 8 || time.len() != 6 {
        return None;
    }
    let date = NaiveDate::from_ymd_opt(
        parse_digits(&date[0..4])?,
        parse_digits(&date[4..6])?,
        parse_digits(&date[6..8])?,
    )?;
    let time = NaiveTime::from_hms_opt(
        parse_digits(&time[0..2])?,
        parse_digits(&time[2..4])?,
        parse_digits(&time[4..6])?,
    )?;
    let (site, station) = match prefix.split_once('-') {
        Some((site, station)) if !site.is_empty() && !station.is_empty() => {
            (site.to_string(), Some(station.to_string()))
        }
        Some(_) => return None,
        None => (prefix.to_string(), None),
    };
    Some(ParsedName {
        site,
        station,
        start_time: date.and_time(time),
    })
}

fn round_millis(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

fn relative_path(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn describe(root: &Path, path: &Path) -> FileRecord {
    let rel = relative_path(root, path);
    let name = rel.rsplit('/').next().unwrap_or(&rel);
    let parsed = parse_filename(name);
    let size_bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
    let duration = match media_io::read_metadata(path) {
        Ok(meta) if meta.n_frames > 0 => Some(round_millis(meta.duration).max(0.001)),
        _ => None,
    };
    let status = match (&duration, &parsed) {
        (None, _) => FileStatus::Unreadable,
        (Some(_), None) => FileStatus::UnparseableName,
        (Some(_), Some(_)) => FileStatus::Ok,
    };
    FileRecord {
        path: rel,
        size_bytes,
        site: parsed.as_ref().map(|p| p.site.clone()),
        station: parsed.as_ref().and_then(|p| p.station.clone()),
        start_time: parsed.map(|p| p.start_time),
        duration: duration.unwrap_or(0.0),
        status,
    }
}

/// Recursively inventories files under `target_dir` whose lowercased
/// extension is in `extensions`.
pub fn scan(target_dir: &Path, extensions: &BTreeSet<String>) -> Result<Inventory, InventoryError> {
    scan_excluding(target_dir, extensions, &[])
}

/// As [`scan`], but does not descend into any directory listed in `exclude`.
pub fn scan_excluding(
    target_dir: &Path,
    extensions: &BTreeSet<String>,
    exclude: &[PathBuf],
) -> Result<Inventory, InventoryError> {
    if !target_dir.is_dir() {
        return Err(InventoryError::TargetMissing(target_dir.to_path_buf()));
    }
    let wanted: BTreeSet<String> = extensions.iter().map(|e| e.to_lowercase()).collect();
    let excluded: Vec<PathBuf> = exclude
        .iter()
        .map(|p| p.canonicalize().unwrap_or_else(|_| p.clone()))
        .collect();

    let files: Vec<PathBuf> = WalkDir::new(target_dir)
        .follow_links(false)
        .into_iter()
        .filter_entry(|entry| {
            !(entry.file_type().is_dir()
                && entry.depth() > 0
                && excluded
                    .iter()
                    .any(|ex| entry.path().canonicalize().is_ok_and(|p| &p == ex)))
        })
        .filter_map(Result::ok)
        .filter(|entry| entry.file_type().is_file())
        .filter(|entry| {
            entry
                .path()
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| wanted.contains(&e.to_lowercase()))
        })
        .map(|entry| entry.into_path())
        .collect();

    let records: Vec<FileRecord> = files.par_iter().map(|p| describe(target_dir, p)).collect();
    Ok(Inventory::new(records, target_dir))
}

/// Writes the inventory CSV. Output depends only on the records.
pub fn write_inventory(inv: &Inventory, out_path: &Path) -> Result<(), InventoryError> {
    let io_fail = |source: io::Error| InventoryError::IoFailure {
        path: out_path.to_path_buf(),
        source,
    };
    let mut w = csvio::writer(out_path).map_err(io_fail)?;
    w.write_record(INVENTORY_HEADER)
        .map_err(|e| io_fail(csvio::csv_io(e)))?;
    for r in &inv.records {
        let start = r
            .start_time
            .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
            .unwrap_or_default();
        w.write_record([
            r.path.as_str(),
            &r.size_bytes.to_string(),
            r.site.as_deref().unwrap_or(""),
            r.station.as_deref().unwrap_or(""),
            &start,
            &format_fixed(r.duration, 3),
            &r.status.to_string(),
        ])
        .map_err(|e| io_fail(csvio::csv_io(e)))?;
    }
    csvio::finish(w).map_err(io_fail)
}

fn non_empty(s: &str) -> Option<String> {
    (!s.is_empty()).then(|| s.to_string())
}

fn parse_row(fields: &csv::StringRecord, line: u64) -> Result<FileRecord, InventoryError> {
    let fail = |reason: String| InventoryError::RowParseFailure { line, reason };
    if fields.len() != INVENTORY_HEADER.len() {
        return Err(fail(format!(
            "expected {} fields, found {}",
            INVENTORY_HEADER.len(),
            fields.len()
        )));
    }
    let path = fields[0].to_string();
    if path.is_empty() || path.contains(',') {
        return Err(fail(format!("invalid path `{path}`")));
    }
    let size_bytes = fields[1]
        .parse::<u64>()
        .map_err(|_| fail(format!("invalid size_bytes `{}`", &fields[1])))?;
    let start_time = match &fields[4] {
        "" => None,
        s => Some(
            NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
                .map_err(|_| fail(format!("invalid start_time `{s}`")))?,
        ),
    };
    let duration = fields[5]
        .parse::<f64>()
        .ok()
        .filter(|d| d.is_finite() && *d >= 0.0)
        .ok_or_else(|| fail(format!("invalid duration_s `{}`", &fields[5])))?;
    let status: FileStatus = fields[6].parse().map_err(fail)?;
    let record = FileRecord {
        path,
        size_bytes,
        site: non_empty(&fields[2]),
        station: non_empty(&fields[3]),
        start_time,
        duration,
        status,
    };
    if status == FileStatus::UnparseableName
        && (record.site.is_some() || record.station.is_some() || record.start_time.is_some())
    {
        return Err(fail("UNPARSEABLE_NAME row carries site/station/start_time".into()));
    }
    if status == FileStatus::Ok && duration <= 0.0 {
        return Err(fail("OK row with non-positive duration".into()));
    }
    Ok(record)
}

/// Reads an inventory CSV. `target_dir` of the result is left empty for the
/// caller to fill in.
pub fn read_inventory(path: &Path) -> Result<Inventory, InventoryError> {
    let io_fail = |source: io::Error| InventoryError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csvio::reader(path, false).map_err(io_fail)?;
    let mut records: Vec<FileRecord> = Vec::new();
    let mut saw_header = false;
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| match e.position() {
            Some(pos) => InventoryError::RowParseFailure {
                line: pos.line(),
                reason: e.to_string(),
            },
            None => io_fail(csvio::csv_io(e)),
        })?;
        let line = csvio::line_of(&row, i + 1);
        if !saw_header {
            let found: Vec<&str> = row.iter().collect();
            if found != INVENTORY_HEADER {
                return Err(InventoryError::SchemaMismatch {
                    expected: INVENTORY_HEADER.join(","),
                    found: found.join(","),
                });
            }
            saw_header = true;
            continue;
        }
        let record = parse_row(&row, line)?;
        if let Some(prev) = records.last() {
            if prev.path.as_bytes() >= record.path.as_bytes() {
                return Err(InventoryError::RowParseFailure {
                    line,
                    reason: format!("path `{}` out of order or duplicated", record.path),
                });
            }
        }
        records.push(record);
    }
    if !saw_header {
        return Err(InventoryError::SchemaMismatch {
            expected: INVENTORY_HEADER.join(","),
            found: String::new(),
        });
    }
    Ok(Inventory::new(records, PathBuf::new()))
}
