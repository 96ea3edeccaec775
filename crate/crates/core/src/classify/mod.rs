//! Detection classes, classifier backends and score tables.
//!
//! Scores are multi-label: every class gets an independent value in `[0, 1]`
//! and nothing forces them to sum to one.

mod external;
mod reference;

pub use external::{load_manifest, ExternalBackend, Manifest, TILE_STREAM_MAGIC};
pub use reference::{reference_score, ReferenceBackend};

use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::csvio;
use crate::numfmt::format_fixed;
use crate::spectro::Tile;

pub const CLASS_LIST_HEADER: [&str; 5] = ["code", "label", "threshold", "band_low_hz", "band_high_hz"];

/// Fractional digits used for scores and thresholds in every CSV.
pub const SCORE_DECIMALS: usize = 4;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("duplicate class code {0}")]
    DuplicateCode(String),
    #[error("line {line}: {field} value `{value}` out of range")]
    ValueOutOfRange {
        field: String,
        line: u64,
        value: String,
    },
    #[error("line {line}: {reason}")]
    RowParseFailure { line: u64, reason: String },
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backend manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_fail(path: &Path) -> impl Fn(io::Error) -> ClassifyError + '_ {
    move |source| ClassifyError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionClass {
    /// Uppercase alphanumeric identifier, unique within a list.
    pub code: String,
    pub label: String,
    /// Default detection threshold in `[0, 1]`.
    pub threshold: f64,
    /// Hz; only the reference backend reads the band.
    pub band_low: f64,
    pub band_high: f64,
}

/// Checks that every class band fits below the Nyquist frequency of `working_rate`.
pub fn validate_bands(classes: &[DetectionClass], working_rate: u32) -> Result<(), ClassifyError> {
    let nyquist = f64::from(working_rate) / 2.0;
    for (i, c) in classes.iter().enumerate() {
        if c.band_high > nyquist {
            return Err(ClassifyError::ValueOutOfRange {
                field: "band_high_hz".into(),
                line: i as u64 + 2,
                value: format!("{} (Nyquist {nyquist})", c.band_high),
            });
        }
    }
    Ok(())
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), ClassifyError> {
    let found: Vec<&str> = found.iter().collect();
    if found != expected {
        return Err(ClassifyError::SchemaMismatch {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn valid_code(code: &str) -> bool {
    !code.is_empty() && code.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

/// Loads a class list CSV, enforcing unique codes, thresholds in `[0, 1]`
/// and `0 <= band_low < band_high`.
pub fn load_class_list(path: &Path) -> Result<Vec<DetectionClass>, ClassifyError> {
    let mut reader = csvio::reader(path, false).map_err(io_fail(path))?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| io_fail(path)(csvio::csv_io(e)))?,
        None => csv::StringRecord::new(),
    };
    check_header(&header, &CLASS_LIST_HEADER)?;

    let mut classes: Vec<DetectionClass> = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in records.enumerate() {
        let row = row.map_err(|e| io_fail(path)(csvio::csv_io(e)))?;
        let line = csvio::line_of(&row, i + 2);
        if row.len() != CLASS_LIST_HEADER.len() {
            return Err(ClassifyError::RowParseFailure {
                line,
                reason: format!("expected 5 fields, found {}", row.len()),
            });
        }
        let out_of_range = |field: &str, value: &str| ClassifyError::ValueOutOfRange {
            field: field.into(),
            line,
            value: value.into(),
        };
        let number = |idx: usize| -> Result<f64, ClassifyError> {
            row[idx]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| out_of_range(CLASS_LIST_HEADER[idx], &row[idx]))
        };
        let code = row[0].trim().to_string();
        if !valid_code(&code) {
            return Err(out_of_range("code", &code));
        }
        let threshold = number(2)?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(out_of_range("threshold", &row[2]));
        }
        let band_low = number(3)?;
        let band_high = number(4)?;
        if band_low < 0.0 {
            return Err(out_of_range("band_low_hz", &row[3]));
        }
        if band_high <= band_low {
            return Err(out_of_range("band_high_hz", &row[4]));
        }
        if !seen.insert(code.clone()) {
            return Err(ClassifyError::DuplicateCode(code));
        }
        classes.push(DetectionClass {
            code,
            label: row[1].to_string(),
            threshold,
            band_low,
            band_high,
        });
    }
    Ok(classes)
}

pub fn write_class_list(classes: &[DetectionClass], path: &Path) -> Result<(), ClassifyError> {
    let fail = io_fail(path);
    let mut w = csvio::writer(path).map_err(&fail)?;
    let mut put = |fields: &[&str]| w.write_record(fields).map_err(|e| fail(csvio::csv_io(e)));
    put(&CLASS_LIST_HEADER)?;
    for c in classes {
        put(&[
            &c.code,
            &c.label,
            &c.threshold.to_string(),
            &c.band_low.to_string(),
            &c.band_high.to_string(),
        ])?;
    }
    csvio::finish(w).map_err(io_fail(path))
}

/// Raw classifier output for one clip; `scores[i]` belongs to class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub clip_id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Reference,
    External,
}

/// Whether a backend tolerates concurrent `score` calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Concurrent,
    SingleStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub source: Option<PathBuf>,
    pub class_count: usize,
    pub concurrency: Concurrency,
}

/// A classifier: a batch of equally-shaped tiles in, one score vector per tile out.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn score(&self, tiles: &[Tile], classes: &[DetectionClass]) -> Result<Vec<Vec<f64>>, ClassifyError>;
}

/// Scores `tiles` in order, checking the backend's output against the contract.
pub fn predict_batch(
    backend: &dyn Backend,
    tiles: &[Tile],
    classes: &[DetectionClass],
) -> Result<Vec<ScoreRow>, ClassifyError> {
    let desc = backend.descriptor();
    if desc.class_count != classes.len() {
        return Err(ClassifyError::ShapeMismatch(format!(
            "backend expects {} classes, class list has {}",
            desc.class_count,
            classes.len()
        )));
    }
    let Some(first) = tiles.first() else {
        return Ok(Vec::new());
    };
    if let Some(odd) = tiles.iter().find(|t| t.shape() != first.shape()) {
        return Err(ClassifyError::ShapeMismatch(format!(
            "tile {} is {:?}, batch is {:?}",
            odd.clip.clip_id(),
            odd.shape(),
            first.shape()
        )));
    }

    let raw = backend.score(tiles, classes)?;
    if raw.len() != tiles.len() {
        return Err(ClassifyError::BackendFailure(format!(
            "{} score rows for {} tiles",
            raw.len(),
            tiles.len()
        )));
    }
    tiles
        .iter()
        .zip(raw)
        .map(|(tile, scores)| {
            if scores.len() != classes.len() {
                return Err(ClassifyError::BackendFailure(format!(
                    "{} scores for {} classes",
                    scores.len(),
                    classes.len()
                )));
            }
            if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(ClassifyError::BackendFailure(format!("score {bad} outside [0, 1]")));
            }
            Ok(ScoreRow {
                clip_id: tile.clip.clip_id(),
                scores,
            })
        })
        .collect()
}

/// Class codes plus rows, as stored in a scores CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub codes: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(codes: Vec<String>, rows: Vec<ScoreRow>) -> Self {
        Self { codes, rows }
    }

    pub fn from_classes(classes: &[DetectionClass], rows: Vec<ScoreRow>) -> Self {
        Self::new(classes.iter().map(|c| c.code.clone()).collect(), rows)
    }

    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| a.clip_id.as_bytes().cmp(b.clip_id.as_bytes()));
    }

    /// Rounds every score to its rendered CSV value, so in-memory results
    /// match what a later reader of the CSV sees.
    pub fn quantize(&mut self) {
        for row in &mut self.rows {
            for s in &mut row.scores {
                *s = format_fixed(*s, SCORE_DECIMALS)
                    .parse()
                    .expect("rendered score parses");
            }
        }
    }
}

/// Writes `clip_id,<code1>,...` with rows sorted by clip id and scores at four decimals.
pub fn write_scores(rows: &[ScoreRow], classes: &[DetectionClass], out_path: &Path) -> Result<(), ClassifyError> {
    write_score_table(&ScoreTable::from_classes(classes, rows.to_vec()), out_path)
}

pub fn write_score_table(table: &ScoreTable, out_path: &Path) -> Result<(), ClassifyError> {
    let fail = io_fail(out_path);
    let mut order: Vec<&ScoreRow> = table.rows.iter().collect();
    order.sort_by(|a, b| a.clip_id.as_bytes().cmp(b.clip_id.as_bytes()));

    let mut w = csvio::writer(out_path).map_err(&fail)?;
    let mut header = vec!["clip_id".to_string()];
    header.extend(table.codes.iter().cloned());
    w.write_record(&header).map_err(|e| fail(csvio::csv_io(e)))?;
    let mut fields = Vec::with_capacity(table.codes.len() + 1);
    for row in order {
        fields.clear();
        fields.push(row.clip_id.clone());
        fields.extend(row.scores.iter().map(|s| format_fixed(*s, SCORE_DECIMALS)));
        w.write_record(&fields).map_err(|e| fail(csvio::csv_io(e)))?;
    }
    csvio::finish(w).map_err(io_fail(out_path))
}

/// Reads a scores CSV written by [`write_score_table`].
pub fn read_scores(path: &Path) -> Result<ScoreTable, ClassifyError> {
    let mut reader = csvio::reader(path, false).map_err(io_fail(path))?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| io_fail(path)(csvio::csv_io(e)))?,
        None => csv::StringRecord::new(),
    };
    if header.get(0) != Some("clip_id") {
        return Err(ClassifyError::SchemaMismatch {
            expected: "clip_id,<codes...>".into(),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let codes: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    if let Some(dup) = codes.iter().find(|c| !seen.insert(c.as_str())) {
        return Err(ClassifyError::DuplicateCode(dup.clone()));
    }

    let mut rows = Vec::new();
    for (i, row) in records.enumerate() {
        let row = row.map_err(|e| io_fail(path)(csvio::csv_io(e)))?;
        let line = csvio::line_of(&row, i + 2);
        if row.len() != codes.len() + 1 {
            return Err(ClassifyError::RowParseFailure {
                line,
                reason: format!("expected {} fields, found {}", codes.len() + 1, row.len()),
            });
        }
        let scores = row
            .iter()
            .skip(1)
            .zip(&codes)
            .map(|(v, code)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|s| (0.0..=1.0).contains(s))
                    .ok_or_else(|| ClassifyError::ValueOutOfRange {
                        field: code.clone(),
                        line,
                        value: v.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ScoreRow {
            clip_id: row[0].to_string(),
            scores,
        });
    }
    Ok(ScoreTable { codes, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::Clip;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    pub(crate) fn tile(id_index: usize, height: usize, width: usize, fill: f32) -> Tile {
        Tile {
            clip: Clip {
                source: "rec.wav".into(),
                index: id_index,
                start: 0.0,
                length: 12.0,
                pad: 0.0,
            },
            height,
            width,
            bin_hz: 31.25,
            intensities: vec![fill; height * width],
        }
    }

    fn classes(n: usize) -> Vec<DetectionClass> {
        (0..n)
            .map(|i| DetectionClass {
                code: format!("C{i}"),
                label: format!("class {i}"),
                threshold: 0.5,
                band_low: 100.0 * i as f64,
                band_high: 100.0 * i as f64 + 50.0,
            })
            .collect()
    }

    #[test]
    fn loads_classes_in_file_order() {
        let dir = tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "code,label,threshold,band_low_hz,band_high_hz\n\
             STOC,\"Spotted owl, northern\",0.9,500,1200\n\
             BRMA1,Marbled murrelet,0.5,1500,4000\n",
        );
        let list = load_class_list(&p).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].code, "STOC");
        assert_eq!(list[0].label, "Spotted owl, northern");
        assert_eq!(list[1].band_high, 4000.0);
    }

    #[test]
    fn duplicate_code_rejected() {
        let dir = tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.csv",
            "code,label,threshold,band_low_hz,band_high_hz\nSTOC,a,0.5,1,2\nSTOC,b,0.5,1,2\n",
        );
        match load_class_list(&p) {
            Err(ClassifyError::DuplicateCode(code)) => assert_eq!(code, "STOC"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_values_rejected() {
        let dir = tempdir().unwrap();
        for (row, field) in [
            ("STOC,a,1.5,1,2", "threshold"),
            ("STOC,a,-0.1,1,2", "threshold"),
            ("STOC,a,0.5,-1,2", "band_low_hz"),
            ("STOC,a,0.5,5,5", "band_high_hz"),
            ("stoc,a,0.5,1,2", "code"),
            ("ST-OC,a,0.5,1,2", "code"),
            ("STOC,a,x,1,2", "threshold"),
        ] {
            let p = write(
                dir.path(),
                "c.csv",
                &format!("code,label,threshold,band_low_hz,band_high_hz\n{row}\n"),
            );
            match load_class_list(&p) {
                Err(ClassifyError::ValueOutOfRange { field: f, line, .. }) => {
                    assert_eq!(f, field, "{row}");
                    assert_eq!(line, 2);
                }
                other => panic!("{row}: {other:?}"),
            }
        }
    }

    #[test]
    fn class_list_header_checked() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "code,label,threshold\n");
        assert!(matches!(load_class_list(&p), Err(ClassifyError::SchemaMismatch { .. })));
    }

    #[test]
    fn nyquist_check() {
        let mut c = classes(1);
        c[0].band_high = 8001.0;
        assert!(validate_bands(&c, 16_000).is_err());
        c[0].band_high = 8000.0;
        assert!(validate_bands(&c, 16_000).is_ok());
    }

    #[test]
    fn class_list_write_read() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let list = classes(4);
        write_class_list(&list, &p).unwrap();
        assert_eq!(load_class_list(&p).unwrap(), list);
    }

    #[test]
    fn empty_batch_gives_empty_result() {
        let backend = ReferenceBackend::new(3);
        assert!(predict_batch(&backend, &[], &classes(3)).unwrap().is_empty());
    }

    #[test]
    fn batch_shape_contract() {
        let backend = ReferenceBackend::new(3);
        let tiles: Vec<Tile> = (0..4).map(|i| tile(i, 8, 5, 0.3)).collect();
        let rows = predict_batch(&backend, &tiles, &classes(3)).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].clip_id, "rec_part003");
        assert!(rows
            .iter()
            .all(|r| r.scores.len() == 3 && r.scores.iter().all(|s| (0.0..=1.0).contains(s))));
    }

    #[test]
    fn mixed_shapes_rejected() {
        let backend = ReferenceBackend::new(1);
        let tiles = vec![tile(0, 8, 5, 0.1), tile(1, 8, 6, 0.1)];
        assert!(matches!(
            predict_batch(&backend, &tiles, &classes(1)),
            Err(ClassifyError::ShapeMismatch(_))
        ));
        assert!(matches!(
            predict_batch(&backend, &tiles[..1], &classes(2)),
            Err(ClassifyError::ShapeMismatch(_))
        ));
    }

    struct Broken(BackendDescriptor);

    impl Backend for Broken {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.0
        }
        fn score(&self, tiles: &[Tile], _: &[DetectionClass]) -> Result<Vec<Vec<f64>>, ClassifyError> {
            Ok(tiles.iter().map(|_| vec![1.5]).collect())
        }
    }

    #[test]
    fn out_of_range_backend_output_is_failure() {
        let b = Broken(BackendDescriptor {
            kind: BackendKind::External,
            source: None,
            class_count: 1,
            concurrency: Concurrency::SingleStream,
        });
        assert!(matches!(
            predict_batch(&b, &[tile(0, 2, 2, 0.0)], &classes(1)),
            Err(ClassifyError::BackendFailure(_))
        ));
    }

    #[test]
    fn score_rendering_and_sorting() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![
            ScoreRow {
                clip_id: "b_part001".into(),
                scores: vec![0.12355, 1.0],
            },
            ScoreRow {
                clip_id: "a_part002".into(),
                scores: vec![0.12345, 0.0],
            },
        ];
        write_scores(&rows, &classes(2), &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "clip_id,C0,C1\na_part002,0.1234,0.0000\nb_part001,0.1236,1.0000\n"
        );
    }

    #[test]
    fn empty_scores_header_only() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scores(&[], &classes(2), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "clip_id,C0,C1\n");
        assert!(read_scores(&p).unwrap().rows.is_empty());
    }

    #[test]
    fn scores_write_read_write_identical() {
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.csv"), dir.path().join("2.csv"));
        let mut rng = crate::synth::XorShift::new(11);
        let rows: Vec<ScoreRow> = (0..50)
            .map(|i| ScoreRow {
                clip_id: format!("f{}_part{:03}", i % 7, i),
                scores: (0..3).map(|_| rng.next_f64()).collect(),
            })
            .collect();
        write_scores(&rows, &classes(3), &p1).unwrap();
        let table = read_scores(&p1).unwrap();
        write_score_table(&table, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn malformed_score_rows() {
        let dir = tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "clip_id,A\nx_part001,1.2\n");
        assert!(matches!(read_scores(&p), Err(ClassifyError::ValueOutOfRange { line: 2, .. })));
        let p = write(dir.path(), "s.csv", "clip_id,A\nx_part001,0.1,0.2\n");
        assert!(matches!(read_scores(&p), Err(ClassifyError::RowParseFailure { line: 2, .. })));
        let p = write(dir.path(), "s.csv", "clip,A\n");
        assert!(matches!(read_scores(&p), Err(ClassifyError::SchemaMismatch { .. })));
    }

    #[test]
    fn quantize_matches_rendering() {
        let mut t = ScoreTable::new(
            vec!["A".into()],
            vec![ScoreRow {
                clip_id: "x".into(),
                scores: vec![0.12345],
            }],
        );
        t.quantize();
        assert_eq!(t.rows[0].scores[0], 0.1234);
    }
}
