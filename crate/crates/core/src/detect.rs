//! Turning score tables into apparent detections and station-day summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use thiserror::Error;

use crate::classify::{self, ClassifyError, DetectionClass, ScoreRow, ScoreTable, SCORE_DECIMALS};
use crate::csvio;
use crate::inventory::Inventory;
use crate::numfmt::format_fixed;
use crate::spectro::parse_clip_id;

pub const DETECTIONS_HEADER: [&str; 6] = ["class", "clip_id", "source", "start_s", "score", "threshold"];
pub const SUMMARY_HEADER: [&str; 6] = ["site", "station", "date", "class", "n_detections", "n_clips"];

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("threshold override for unknown class {0}")]
    UnknownClassOverride(String),
    #[error("threshold {value} for {code} outside [0, 1]")]
    InvalidThreshold { code: String, value: f64 },
    #[error("clip id `{0}` does not end in _partNNN")]
    MalformedClipId(String),
    #[error("score row {clip_id} has {found} scores for {expected} classes")]
    ShapeMismatch {
        clip_id: String,
        found: usize,
        expected: usize,
    },
    #[error("part {part} differs from the first part at column `{column}`")]
    HeaderMismatch { part: PathBuf, column: String },
    #[error("clip id {0} appears in more than one part")]
    DuplicateClipId(String),
    #[error("source {0} is not in the inventory")]
    SourceNotInInventory(String),
    #[error("{site}/{station} {date}: {n_detections} detections of {class} but only {n_clips} clips")]
    InconsistentClipCounts {
        site: String,
        station: String,
        date: String,
        class: String,
        n_detections: usize,
        n_clips: usize,
    },
    #[error("line {line}: {reason}")]
    RowParseFailure { line: u64, reason: String },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error(transparent)]
    Scores(#[from] ClassifyError),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One (clip, class) pair whose score reached the class threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_code: String,
    pub clip_id: String,
    pub source: String,
    /// Seconds from the start of `source`.
    pub start: f64,
    pub score: f64,
    pub threshold_used: f64,
}

/// Maps clip ids back to their recordings and offsets.
#[derive(Debug, Clone)]
pub struct ClipLocator {
    clip_length: f64,
    sources: HashMap<String, String>,
}

impl ClipLocator {
    /// Locator without known sources; a clip's source is reported as its stem.
    pub fn new(clip_length: f64) -> Self {
        Self {
            clip_length,
            sources: HashMap::new(),
        }
    }

    /// Resolves stems against inventory paths. When two records share a stem
    /// the first in inventory order wins.
    pub fn from_inventory(inv: &Inventory, clip_length: f64) -> Self {
        let mut sources = HashMap::new();
        for r in &inv.records {
            sources
                .entry(r.stem().to_string())
                .or_insert_with(|| r.path.clone());
        }
        Self {
            clip_length,
            sources,
        }
    }

    pub fn clip_length(&self) -> f64 {
        self.clip_length
    }

    /// `(source, start_seconds)` for a clip id.
    pub fn locate(&self, clip_id: &str) -> Result<(String, f64), DetectError> {
        let (stem, index) =
            parse_clip_id(clip_id).ok_or_else(|| DetectError::MalformedClipId(clip_id.to_string()))?;
        let source = self
            .sources
            .get(stem)
            .cloned()
            .unwrap_or_else(|| stem.to_string());
        Ok((source, index as f64 * self.clip_length))
    }
}

/// Effective per-class thresholds: overrides where given, class defaults otherwise.
pub fn effective_thresholds(
    classes: &[DetectionClass],
    overrides: &BTreeMap<String, f64>,
) -> Result<Vec<f64>, DetectError> {
    for (code, &value) in overrides {
        if !classes.iter().any(|c| &c.code == code) {
            return Err(DetectError::UnknownClassOverride(code.clone()));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(DetectError::InvalidThreshold {
                code: code.clone(),
                value,
            });
        }
    }
    Ok(classes
        .iter()
        .map(|c| overrides.get(&c.code).copied().unwrap_or(c.threshold))
        .collect())
}

/// Emits a detection for every score at or above its class's effective
/// threshold, ordered by class code, descending score, then clip id.
pub fn apply_thresholds(
    rows: &[ScoreRow],
    classes: &[DetectionClass],
    overrides: &BTreeMap<String, f64>,
    locator: &ClipLocator,
) -> Result<Vec<Detection>, DetectError> {
    let thresholds = effective_thresholds(classes, overrides)?;
    let mut out = Vec::new();
    for row in rows {
        if row.scores.len() != classes.len() {
            return Err(DetectError::ShapeMismatch {
                clip_id: row.clip_id.clone(),
                found: row.scores.len(),
                expected: classes.len(),
            });
        }
        let mut located = None;
        for ((cls, &score), &threshold) in classes.iter().zip(&row.scores).zip(&thresholds) {
            if score >= threshold {
                let (source, start) = match &located {
                    Some(l) => l,
                    None => located.insert(locator.locate(&row.clip_id)?),
                };
                out.push(Detection {
                    class_code: cls.code.clone(),
                    clip_id: row.clip_id.clone(),
                    source: source.clone(),
                    start: *start,
                    score,
                    threshold_used: threshold,
                });
            }
        }
    }
    sort_detections(&mut out);
    Ok(out)
}

pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        a.class_code
            .cmp(&b.class_code)
            .then(b.score.total_cmp(&a.score))
            .then_with(|| a.clip_id.as_bytes().cmp(b.clip_id.as_bytes()))
    });
}

/// Merges score-table parts that share one header into a single table sorted by clip id.
pub fn combine_parts(part_paths: &[PathBuf]) -> Result<ScoreTable, DetectError> {
    let mut merged: Option<ScoreTable> = None;
    let mut seen = HashSet::new();
    for path in part_paths {
        let part = classify::read_scores(path)?;
        let table = merged.get_or_insert_with(|| ScoreTable::new(part.codes.clone(), Vec::new()));
        if part.codes != table.codes {
            let differing = table
                .codes
                .iter()
                .zip(&part.codes)
                .position(|(a, b)| a != b)
                .unwrap_or(table.codes.len().min(part.codes.len()));
            let column = part
                .codes
                .get(differing)
                .or_else(|| table.codes.get(differing))
                .cloned()
                .unwrap_or_default();
            return Err(DetectError::HeaderMismatch {
                part: path.clone(),
                column,
            });
        }
        for row in part.rows {
            if !seen.insert(row.clip_id.clone()) {
                return Err(DetectError::DuplicateClipId(row.clip_id));
            }
            table.rows.push(row);
        }
    }
    let mut table = merged.unwrap_or_else(|| ScoreTable::new(Vec::new(), Vec::new()));
    table.sort();
    Ok(table)
}

/// Detection counts for one class at one station on one calendar day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryRow {
    pub site: String,
    pub station: String,
    /// `None` when the recording's start time is unknown.
    pub date: Option<NaiveDate>,
    pub class_code: String,
    pub n_detections: usize,
    /// Clips scored for this station-day.
    pub n_clips: usize,
}

type DayKey = (String, String, Option<NaiveDate>);

fn clip_day(inv: &Inventory, source: &str, start: f64) -> Result<DayKey, DetectError> {
    let rec = inv
        .get(source)
        .ok_or_else(|| DetectError::SourceNotInInventory(source.to_string()))?;
    let date = rec
        .start_time
        .map(|t| (t + Duration::milliseconds((start * 1000.0).round() as i64)).date());
    Ok((
        rec.site.clone().unwrap_or_default(),
        rec.station.clone().unwrap_or_default(),
        date,
    ))
}

/// Groups detections by station-day and class.
///
/// `clip_counts` gives the number of clips scored per source; clip `i` of a
/// source starts `i * clip_length` seconds into it, which decides its day.
pub fn summarize(
    dets: &[Detection],
    inv: &Inventory,
    clip_counts: &BTreeMap<String, usize>,
    clip_length: f64,
) -> Result<Vec<SummaryRow>, DetectError> {
    let mut clips_per_day: BTreeMap<DayKey, usize> = BTreeMap::new();
    for (source, &count) in clip_counts {
        for i in 0..count {
            *clips_per_day
                .entry(clip_day(inv, source, i as f64 * clip_length)?)
                .or_default() += 1;
        }
    }

    let mut counts: BTreeMap<(DayKey, String), usize> = BTreeMap::new();
    for d in dets {
        let key = clip_day(inv, &d.source, d.start)?;
        *counts.entry((key, d.class_code.clone())).or_default() += 1;
    }

    counts
        .into_iter()
        .map(|((day, class_code), n_detections)| {
            let n_clips = clips_per_day.get(&day).copied().unwrap_or(0);
            let (site, station, date) = day;
            if n_detections > n_clips {
                return Err(DetectError::InconsistentClipCounts {
                    site,
                    station,
                    date: date.map(|d| d.to_string()).unwrap_or_default(),
                    class: class_code,
                    n_detections,
                    n_clips,
                });
            }
            Ok(SummaryRow {
                site,
                station,
                date,
                class_code,
                n_detections,
                n_clips,
            })
        })
        .collect()
}

fn io_fail(path: &Path) -> impl Fn(io::Error) -> DetectError + '_ {
    move |source| DetectError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn write_rows<'a>(
    out_path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>> + 'a,
) -> Result<(), DetectError> {
    let fail = io_fail(out_path);
    let mut w = csvio::writer(out_path).map_err(&fail)?;
    w.write_record(header).map_err(|e| fail(csvio::csv_io(e)))?;
    for row in rows {
        w.write_record(&row).map_err(|e| fail(csvio::csv_io(e)))?;
    }
    csvio::finish(w).map_err(&fail)
}

/// Reads a CSV whose first line must equal `header`; yields `(line, record)` pairs.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, DetectError> {
    let fail = io_fail(path);
    let mut reader = csvio::reader(path, false).map_err(&fail)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| fail(csvio::csv_io(e)))?;
        let line = csvio::line_of(&row, i + 1);
        if i == 0 {
            let found: Vec<&str> = row.iter().collect();
            if found != header {
                return Err(DetectError::SchemaMismatch {
                    expected: header.join(","),
                    found: found.join(","),
                });
            }
            continue;
        }
        if row.len() != header.len() {
            return Err(DetectError::RowParseFailure {
                line,
                reason: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        out.push((line, row));
    }
    if out.is_empty() && std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true) {
        return Err(DetectError::SchemaMismatch {
            expected: header.join(","),
            found: String::new(),
        });
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T, DetectError> {
    row[idx].parse().map_err(|_| DetectError::RowParseFailure {
        line,
        reason: format!("invalid {name} `{}`", &row[idx]),
    })
}

pub fn write_detections(dets: &[Detection], out_path: &Path) -> Result<(), DetectError> {
    write_rows(
        out_path,
        &DETECTIONS_HEADER,
        dets.iter().map(|d| {
            vec![
                d.class_code.clone(),
                d.clip_id.clone(),
                d.source.clone(),
                format_fixed(d.start, 1),
                format_fixed(d.score, SCORE_DECIMALS),
                format_fixed(d.threshold_used, SCORE_DECIMALS),
            ]
        }),
    )
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, DetectError> {
    read_rows(path, &DETECTIONS_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            Ok(Detection {
                class_code: row[0].to_string(),
                clip_id: row[1].to_string(),
                source: row[2].to_string(),
                start: field(&row, 3, "start_s", line)?,
                score: field(&row, 4, "score", line)?,
                threshold_used: field(&row, 5, "threshold", line)?,
            })
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], out_path: &Path) -> Result<(), DetectError> {
    write_rows(
        out_path,
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.site.clone(),
                r.station.clone(),
                r.date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
                r.class_code.clone(),
                r.n_detections.to_string(),
                r.n_clips.to_string(),
            ]
        }),
    )
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, DetectError> {
    read_rows(path, &SUMMARY_HEADER)?
        .into_iter()
        .map(|(line, row)| {
            let date = match &row[2] {
                "" => None,
                s => Some(NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
                    DetectError::RowParseFailure {
                        line,
                        reason: format!("invalid date `{s}`"),
                    }
                })?),
            };
            Ok(SummaryRow {
                site: row[0].to_string(),
                station: row[1].to_string(),
                date,
                class_code: row[3].to_string(),
                n_detections: field(&row, 4, "n_detections", line)?,
                n_clips: field(&row, 5, "n_clips", line)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{FileRecord, FileStatus};
    use crate::synth::XorShift;
    use chrono::NaiveDateTime;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn classes(codes: &[&str], threshold: f64) -> Vec<DetectionClass> {
        codes
            .iter()
            .map(|c| DetectionClass {
                code: c.to_string(),
                label: String::new(),
                threshold,
                band_low: 0.0,
                band_high: 1.0,
            })
            .collect()
    }

    fn row(id: &str, scores: &[f64]) -> ScoreRow {
        ScoreRow {
            clip_id: id.into(),
            scores: scores.to_vec(),
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let dets = apply_thresholds(
            &[row("a_part002", &[0.95])],
            &classes(&["STOC"], 0.95),
            &BTreeMap::new(),
            &ClipLocator::new(12.0),
        )
        .unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].start, 12.0);
        assert_eq!(dets[0].source, "a");
        assert_eq!(dets[0].threshold_used, 0.95);
    }

    #[test]
    fn nothing_above_threshold() {
        let dets = apply_thresholds(
            &[row("a_part001", &[0.1, 0.2]), row("b_part001", &[0.3, 0.0])],
            &classes(&["A", "B"], 0.5),
            &BTreeMap::new(),
            &ClipLocator::new(12.0),
        )
        .unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn overrides_and_unknown_codes() {
        let cls = classes(&["A", "B"], 0.9);
        let rows = [row("a_part001", &[0.5, 0.5])];
        let loc = ClipLocator::new(12.0);
        let over = BTreeMap::from([("B".to_string(), 0.4)]);
        let dets = apply_thresholds(&rows, &cls, &over, &loc).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].class_code, "B");
        let bad = BTreeMap::from([("ZZZ".to_string(), 0.4)]);
        assert!(matches!(
            apply_thresholds(&rows, &cls, &bad, &loc),
            Err(DetectError::UnknownClassOverride(c)) if c == "ZZZ"
        ));
        let out_of_range = BTreeMap::from([("A".to_string(), 1.4)]);
        assert!(matches!(
            apply_thresholds(&rows, &cls, &out_of_range, &loc),
            Err(DetectError::InvalidThreshold { .. })
        ));
    }

    #[test]
    fn ordering_is_class_score_clip() {
        let dets = apply_thresholds(
            &[
                row("b_part001", &[0.7, 0.9]),
                row("a_part001", &[0.7, 0.6]),
                row("c_part001", &[0.8, 0.0]),
            ],
            &classes(&["A", "B"], 0.5),
            &BTreeMap::new(),
            &ClipLocator::new(12.0),
        )
        .unwrap();
        let order: Vec<(&str, &str)> = dets
            .iter()
            .map(|d| (d.class_code.as_str(), d.clip_id.as_str()))
            .collect();
        assert_eq!(
            order,
            [("A", "c_part001"), ("A", "a_part001"), ("A", "b_part001"), ("B", "b_part001"), ("B", "a_part001")]
        );
    }

    #[test]
    fn malformed_clip_id_rejected() {
        assert!(matches!(
            apply_thresholds(
                &[row("oops", &[1.0])],
                &classes(&["A"], 0.5),
                &BTreeMap::new(),
                &ClipLocator::new(12.0)
            ),
            Err(DetectError::MalformedClipId(_))
        ));
    }

    fn write_part(dir: &Path, name: &str, codes: &[&str], ids: impl Iterator<Item = String>) -> PathBuf {
        let p = dir.join(name);
        let rows = ids.map(|id| row(&id, &vec![0.5; codes.len()])).collect();
        let table = ScoreTable::new(codes.iter().map(|c| c.to_string()).collect(), rows);
        classify::write_score_table(&table, &p).unwrap();
        p
    }

    #[test]
    fn combine_counts_add() {
        let dir = tempdir().unwrap();
        let a = write_part(dir.path(), "a.csv", &["A", "B"], (0..10).map(|i| format!("z_part{:03}", i + 1)));
        let b = write_part(dir.path(), "b.csv", &["A", "B"], (0..15).map(|i| format!("m_part{:03}", i + 1)));
        let merged = combine_parts(&[a, b]).unwrap();
        assert_eq!(merged.rows.len(), 25);
        assert!(merged.rows.windows(2).all(|w| w[0].clip_id < w[1].clip_id));
        assert_eq!(merged.rows[0].clip_id, "m_part001");
    }

    #[test]
    fn combine_rejects_reordered_columns() {
        let dir = tempdir().unwrap();
        let a = write_part(dir.path(), "a.csv", &["A", "B"], std::iter::once("x_part001".into()));
        let b = write_part(dir.path(), "b.csv", &["B", "A"], std::iter::once("y_part001".into()));
        match combine_parts(&[a, b.clone()]) {
            Err(DetectError::HeaderMismatch { part, column }) => {
                assert_eq!(part, b);
                assert_eq!(column, "B");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn combine_rejects_duplicate_clip() {
        let dir = tempdir().unwrap();
        let a = write_part(dir.path(), "a.csv", &["A"], std::iter::once("x_part001".into()));
        let b = write_part(dir.path(), "b.csv", &["A"], std::iter::once("x_part001".into()));
        assert!(matches!(combine_parts(&[a, b]), Err(DetectError::DuplicateClipId(id)) if id == "x_part001"));
    }

    fn inventory() -> Inventory {
        let t = |s: &str| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").ok();
        Inventory::new(
            vec![
                FileRecord {
                    path: "s1/CLE-01_20230515_235930.wav".into(),
                    size_bytes: 0,
                    site: Some("CLE".into()),
                    station: Some("01".into()),
                    start_time: t("2023-05-15T23:59:30"),
                    duration: 60.0,
                    status: FileStatus::Ok,
                },
                FileRecord {
                    path: "s2/CLE-02_20230516_010000.wav".into(),
                    size_bytes: 0,
                    site: Some("CLE".into()),
                    station: Some("02".into()),
                    start_time: t("2023-05-16T01:00:00"),
                    duration: 60.0,
                    status: FileStatus::Ok,
                },
            ],
            "/data",
        )
    }

    fn det(class: &str, clip: &str, source: &str, start: f64) -> Detection {
        Detection {
            class_code: class.into(),
            clip_id: clip.into(),
            source: source.into(),
            start,
            score: 0.9,
            threshold_used: 0.5,
        }
    }

    #[test]
    fn summary_of_nothing_is_empty() {
        let counts = BTreeMap::from([("s1/CLE-01_20230515_235930.wav".to_string(), 5)]);
        assert!(summarize(&[], &inventory(), &counts, 12.0).unwrap().is_empty());
    }

    #[test]
    fn summary_groups_one_station_day() {
        let src = "s2/CLE-02_20230516_010000.wav";
        let dets: Vec<Detection> = (0..3)
            .map(|i| det("STVA", &format!("CLE-02_20230516_010000_part{:03}", i + 1), src, 12.0 * i as f64))
            .collect();
        let counts = BTreeMap::from([(src.to_string(), 5)]);
        let rows = summarize(&dets, &inventory(), &counts, 12.0).unwrap();
        assert_eq!(
            rows,
            vec![SummaryRow {
                site: "CLE".into(),
                station: "02".into(),
                date: NaiveDate::from_ymd_opt(2023, 5, 16),
                class_code: "STVA".into(),
                n_detections: 3,
                n_clips: 5,
            }]
        );
    }

    #[test]
    fn summary_splits_at_midnight() {
        let src = "s1/CLE-01_20230515_235930.wav";
        // Clips at 0 s and 12 s fall on the 15th, 36 s onward on the 16th.
        let dets = vec![det("A", "x_part001", src, 0.0), det("A", "x_part004", src, 36.0)];
        let counts = BTreeMap::from([(src.to_string(), 5)]);
        let rows = summarize(&dets, &inventory(), &counts, 12.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].n_detections, rows[0].n_clips), (1, 3));
        assert_eq!((rows[1].n_detections, rows[1].n_clips), (1, 2));
        assert!(rows[0].date < rows[1].date);
    }

    #[test]
    fn summary_unknown_source() {
        let dets = vec![det("A", "x_part001", "nowhere.wav", 0.0)];
        assert!(matches!(
            summarize(&dets, &inventory(), &BTreeMap::new(), 12.0),
            Err(DetectError::SourceNotInInventory(_))
        ));
    }

    #[test]
    fn detections_and_summary_round_trip() {
        let dir = tempdir().unwrap();
        let dets = vec![
            det("A", "x_part001", "a/x.wav", 0.0),
            Detection {
                score: 0.12345,
                start: 36.75,
                ..det("B", "y_part004", "b/y, z.wav", 36.75)
            },
        ];
        let (p1, p2) = (dir.path().join("d1.csv"), dir.path().join("d2.csv"));
        write_detections(&dets, &p1).unwrap();
        let text = std::fs::read_to_string(&p1).unwrap();
        assert!(text.starts_with("class,clip_id,source,start_s,score,threshold\nA,x_part001,a/x.wav,0.0,0.9000,0.5000\n"));
        assert!(text.contains("\"b/y, z.wav\",36.8,0.1234,"));
        write_detections(&read_detections(&p1).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let src = "s2/CLE-02_20230516_010000.wav";
        let counts = BTreeMap::from([(src.to_string(), 5)]);
        let rows = summarize(&[det("A", "q_part001", src, 0.0)], &inventory(), &counts, 12.0).unwrap();
        let (s1, s2) = (dir.path().join("s1.csv"), dir.path().join("s2.csv"));
        write_summary(&rows, &s1).unwrap();
        assert_eq!(
            std::fs::read_to_string(&s1).unwrap(),
            "site,station,date,class,n_detections,n_clips\nCLE,02,2023-05-16,A,1,5\n"
        );
        let back = read_summary(&s1).unwrap();
        assert_eq!(back, rows);
        write_summary(&back, &s2).unwrap();
        assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
    }

    #[test]
    fn empty_outputs_are_header_only() {
        let dir = tempdir().unwrap();
        let (d, s) = (dir.path().join("d.csv"), dir.path().join("s.csv"));
        write_detections(&[], &d).unwrap();
        write_summary(&[], &s).unwrap();
        assert_eq!(std::fs::read_to_string(&d).unwrap(), "class,clip_id,source,start_s,score,threshold\n");
        assert_eq!(std::fs::read_to_string(&s).unwrap(), "site,station,date,class,n_detections,n_clips\n");
        assert!(read_detections(&d).unwrap().is_empty());
        assert!(read_summary(&s).unwrap().is_empty());
    }

    /// Independent group-and-count over a flat list.
    fn brute_force_summary(
        dets: &[Detection],
        inv: &Inventory,
        counts: &BTreeMap<String, usize>,
        clip_length: f64,
    ) -> Vec<(String, String, Option<NaiveDate>, String, usize, usize)> {
        let day_of = |src: &str, start: f64| {
            let r = inv.records.iter().find(|r| r.path == src).unwrap();
            let d = r.start_time.map(|t| (t + Duration::seconds(start as i64)).date());
            (r.site.clone().unwrap_or_default(), r.station.clone().unwrap_or_default(), d)
        };
        let mut keys: Vec<_> = dets
            .iter()
            .map(|d| {
                let (a, b, c) = day_of(&d.source, d.start);
                (a, b, c, d.class_code.clone())
            })
            .collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|(site, station, date, class)| {
                let n_det = dets
                    .iter()
                    .filter(|d| d.class_code == class && day_of(&d.source, d.start) == (site.clone(), station.clone(), date))
                    .count();
                let n_clips = counts
                    .iter()
                    .flat_map(|(s, &n)| (0..n).map(move |i| (s.clone(), i)))
                    .filter(|(s, i)| day_of(s, *i as f64 * clip_length) == (site.clone(), station.clone(), date))
                    .count();
                (site, station, date, class, n_det, n_clips)
            })
            .collect()
    }

    #[test]
    fn summary_matches_brute_force() {
        let inv = inventory();
        let mut rng = XorShift::new(5);
        let counts: BTreeMap<String, usize> = inv.records.iter().map(|r| (r.path.clone(), 5)).collect();
        for _ in 0..20 {
            let mut dets = Vec::new();
            for r in &inv.records {
                for i in 0..5 {
                    for class in ["A", "B", "C"] {
                        if rng.next_f64() < 0.4 {
                            dets.push(det(class, &format!("{}_part{:03}", r.stem(), i + 1), &r.path, 12.0 * i as f64));
                        }
                    }
                }
            }
            let got: Vec<_> = summarize(&dets, &inv, &counts, 12.0)
                .unwrap()
                .into_iter()
                .map(|r| (r.site, r.station, r.date, r.class_code, r.n_detections, r.n_clips))
                .collect();
            assert_eq!(got, brute_force_summary(&dets, &inv, &counts, 12.0));
            let total: usize = got.iter().map(|r| r.4).sum();
            assert_eq!(total, dets.len());
        }
    }

    proptest! {
        #[test]
        fn raising_a_threshold_never_adds_detections(
            scores in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, 3), 0..40),
            low in 0.0f64..=1.0,
            bump in 0.0f64..=1.0,
        ) {
            let rows: Vec<ScoreRow> = scores.iter().enumerate()
                .map(|(i, s)| row(&format!("r_part{:03}", i + 1), s)).collect();
            let cls = classes(&["A", "B", "C"], 0.5);
            let loc = ClipLocator::new(12.0);
            let count = |t: f64| {
                let over = BTreeMap::from([("B".to_string(), t)]);
                apply_thresholds(&rows, &cls, &over, &loc).unwrap().iter().filter(|d| d.class_code == "B").count()
            };
            prop_assert!(count((low + bump).min(1.0)) <= count(low));
        }

        #[test]
        fn partition_then_combine_is_identity(n in 0usize..40, cuts in proptest::collection::vec(0usize..40, 0..4)) {
            let dir = tempdir().unwrap();
            let mut rows: Vec<ScoreRow> = (0..n).map(|i| row(&format!("c{:02}_part001", i), &[i as f64 / 40.0])).collect();
            rows.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
            let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.min(n)).collect();
            bounds.push(0);
            bounds.push(n);
            bounds.sort();
            let mut parts = Vec::new();
            for (k, w) in bounds.windows(2).enumerate() {
                let p = dir.path().join(format!("p{k}.csv"));
                // Reverse each part so combine has to sort.
                let chunk: Vec<ScoreRow> = rows[w[0]..w[1]].iter().rev().cloned().collect();
                classify::write_score_table(&ScoreTable::new(vec!["A".into()], chunk), &p).unwrap();
                parts.push(p);
            }
            let merged = combine_parts(&parts).unwrap();
            prop_assert_eq!(merged.rows, rows);
        }
    }
}
