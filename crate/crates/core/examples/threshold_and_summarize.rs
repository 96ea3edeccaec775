//! Filter scores into detections and count them per station-day.
//!
//!     cargo run --example threshold_and_summarize

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use pamflow::classify::{DetectionClass, ScoreRow};
use pamflow::detect::{apply_thresholds, summarize, write_detections, write_summary, ClipLocator};
use pamflow::inventory::{FileRecord, FileStatus, Inventory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let record = |path: &str, start: &str| FileRecord {
        path: path.into(),
        size_bytes: 0,
        site: Some("CLE".into()),
        station: Some("01".into()),
        start_time: NaiveDateTime::parse_from_str(start, "%Y-%m-%d %H:%M:%S").ok(),
        duration: 60.0,
        status: FileStatus::Ok,
    };
    // The first recording crosses midnight after 30 s.
    let inv = Inventory::new(
        vec![
            record("CLE/CLE-01_20230515_235930.wav", "2023-05-15 23:59:30"),
            record("CLE/CLE-01_20230516_020000.wav", "2023-05-16 02:00:00"),
        ],
        dir.path(),
    );
    let classes: Vec<DetectionClass> = ["STOC", "STVA"]
        .iter()
        .map(|c| DetectionClass {
            code: c.to_string(),
            label: String::new(),
            threshold: 0.8,
            band_low: 0.0,
            band_high: 8000.0,
        })
        .collect();

    let mut rows = Vec::new();
    for (stem, scores) in [
        ("CLE-01_20230515_235930", [[0.95, 0.1], [0.85, 0.2], [0.4, 0.9], [0.1, 0.1], [0.99, 0.7]]),
        ("CLE-01_20230516_020000", [[0.2, 0.81], [0.1, 0.6], [0.9, 0.95], [0.3, 0.3], [0.5, 0.5]]),
    ] {
        for (i, s) in scores.iter().enumerate() {
            rows.push(ScoreRow {
                clip_id: format!("{stem}_part{:03}", i + 1),
                scores: s.to_vec(),
            });
        }
    }

    let locator = ClipLocator::from_inventory(&inv, 12.0);
    // STVA gets a stricter threshold than its class default.
    let overrides = BTreeMap::from([("STVA".to_string(), 0.9)]);
    let dets = apply_thresholds(&rows, &classes, &overrides, &locator)?;

    let mut clip_counts = BTreeMap::new();
    for r in &rows {
        *clip_counts.entry(locator.locate(&r.clip_id)?.0).or_insert(0) += 1;
    }
    let summary = summarize(&dets, &inv, &clip_counts, 12.0)?;

    let (d, s) = (dir.path().join("detections.csv"), dir.path().join("summary.csv"));
    write_detections(&dets, &d)?;
    write_summary(&summary, &s)?;
    print!("{}\n{}", std::fs::read_to_string(d)?, std::fs::read_to_string(s)?);
    Ok(())
}
