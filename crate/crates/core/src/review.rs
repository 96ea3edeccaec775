//! Ranked review manifests and audio excerpts for human confirmation.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::classify::SCORE_DECIMALS;
use crate::csvio;
use crate::detect::Detection;
use crate::media_io::{self, quantize_i16, MediaError, SampleBuffer};
use crate::numfmt::format_fixed;
use crate::spectro::Clip;

pub const REVIEW_HEADER: [&str; 8] = [
    "class",
    "rank",
    "clip_id",
    "source",
    "start_s",
    "score",
    "clip_audio_path",
    "verdict",
];

/// Optional first line of a manifest.
pub const SCHEMA_LINE: &str = "#schema=1";

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("line {line}: {reason}")]
    RowParseFailure { line: u64, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A reviewer's call on one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Yes,
    No,
    Unsure,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "Y",
            Verdict::No => "N",
            Verdict::Unsure => "U",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Y" => Ok(Verdict::Yes),
            "N" => Ok(Verdict::No),
            "U" => Ok(Verdict::Unsure),
            other => Err(format!("verdict must be Y, N or U, found `{other}`")),
        }
    }
}

/// One detection queued for review.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewItem {
    pub class_code: String,
    /// 1-based position within the class.
    pub rank: usize,
    pub clip_id: String,
    pub source: String,
    pub start: f64,
    pub score: f64,
    /// Extracted excerpt, relative to the output directory; empty if none.
    pub clip_audio_path: String,
    pub verdict: Option<Verdict>,
}

/// Top `cap` detections per class by descending score, ties broken by clip id.
/// `None` keeps everything.
pub fn build_review_set(dets: &[Detection], cap: Option<usize>) -> Vec<ReviewItem> {
    let mut by_class: BTreeMap<&str, Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        by_class.entry(&d.class_code).or_default().push(d);
    }
    let mut out = Vec::new();
    for (_, mut group) in by_class {
        group.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.clip_id.as_bytes().cmp(b.clip_id.as_bytes()))
        });
        let keep = cap.unwrap_or(group.len()).min(group.len());
        out.extend(group[..keep].iter().enumerate().map(|(i, d)| ReviewItem {
            class_code: d.class_code.clone(),
            rank: i + 1,
            clip_id: d.clip_id.clone(),
            source: d.source.clone(),
            start: d.start,
            score: d.score,
            clip_audio_path: String::new(),
            verdict: None,
        }));
    }
    out
}

/// Where the pipeline puts an item's excerpt, relative to the output directory.
pub fn review_clip_path(item: &ReviewItem) -> String {
    format!("review/{}/{}.wav", item.class_code, item.clip_id)
}

/// Samples of `clip` from an already-decoded recording, zero-filled past the end.
pub fn clip_window(buf: &SampleBuffer, clip: &Clip) -> Vec<f32> {
    let rate = f64::from(buf.sample_rate);
    let first = (clip.start * rate).round() as usize;
    let n = (clip.length * rate).round() as usize;
    (first..first + n)
        .map(|i| buf.samples.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// Writes `clip` from a decoded recording as mono 16-bit PCM at the recording's rate.
pub fn extract_from_buffer(buf: &SampleBuffer, clip: &Clip, out_path: &Path) -> Result<(), ReviewError> {
    if let Some(dir) = out_path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| ReviewError::IoFailure {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let pcm: Vec<i16> = clip_window(buf, clip).into_iter().map(quantize_i16).collect();
    media_io::write_wav_i16(out_path, &pcm, buf.sample_rate, 1)?;
    Ok(())
}

/// Decodes `source` and writes the excerpt for `clip`.
pub fn extract_clip(source: &Path, clip: &Clip, out_path: &Path) -> Result<(), ReviewError> {
    let buf = media_io::decode(source)?;
    extract_from_buffer(&buf, clip, out_path)
}

pub fn write_review_manifest(items: &[ReviewItem], out_path: &Path) -> Result<(), ReviewError> {
    let fail = |source| ReviewError::IoFailure {
        path: out_path.to_path_buf(),
        source,
    };
    let mut w = csvio::writer(out_path).map_err(fail)?;
    w.write_record(REVIEW_HEADER).map_err(|e| fail(csvio::csv_io(e)))?;
    for it in items {
        w.write_record([
            it.class_code.clone(),
            it.rank.to_string(),
            it.clip_id.clone(),
            it.source.clone(),
            format_fixed(it.start, 1),
            format_fixed(it.score, SCORE_DECIMALS),
            it.clip_audio_path.clone(),
            it.verdict.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| fail(csvio::csv_io(e)))?;
    }
    csvio::finish(w).map_err(fail)
}

/// Reads a manifest, including any verdicts filled in by reviewers.
pub fn read_review_manifest(path: &Path) -> Result<Vec<ReviewItem>, ReviewError> {
    let fail = |source| ReviewError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csvio::reader(path, true).map_err(fail)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| fail(csvio::csv_io(e)))?,
        None => {
            return Err(ReviewError::SchemaMismatch {
                expected: REVIEW_HEADER.join(","),
                found: String::new(),
            })
        }
    };
    if header.iter().ne(REVIEW_HEADER) {
        return Err(ReviewError::SchemaMismatch {
            expected: REVIEW_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = Vec::new();
    for (i, row) in records.enumerate() {
        let row = row.map_err(|e| fail(csvio::csv_io(e)))?;
        let line = csvio::line_of(&row, i + 2);
        let bad = |reason: String| ReviewError::RowParseFailure { line, reason };
        if row.len() != REVIEW_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", REVIEW_HEADER.len(), row.len())));
        }
        let num = |idx: usize| -> Result<f64, ReviewError> {
            row[idx]
                .parse()
                .map_err(|_| bad(format!("invalid {} `{}`", REVIEW_HEADER[idx], &row[idx])))
        };
        let rank: usize = row[1]
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| bad(format!("invalid rank `{}`", &row[1])))?;
        let verdict = match row[7].trim() {
            "" => None,
            v => Some(v.parse().map_err(bad)?),
        };
        out.push(ReviewItem {
            class_code: row[0].to_string(),
            rank,
            clip_id: row[2].to_string(),
            source: row[3].to_string(),
            start: num(4)?,
            score: num(5)?,
            clip_audio_path: row[6].to_string(),
            verdict,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{tone, write_mono_i16, XorShift};
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn det(class: &str, clip: &str, score: f64) -> Detection {
        Detection {
            class_code: class.into(),
            clip_id: clip.into(),
            source: "a/x.wav".into(),
            start: 0.0,
            score,
            threshold_used: 0.5,
        }
    }

    #[test]
    fn cap_zero_is_empty() {
        assert!(build_review_set(&[det("A", "x_part001", 0.9)], Some(0)).is_empty());
    }

    #[test]
    fn cap_keeps_highest() {
        let dets: Vec<Detection> = [0.6, 0.9, 0.7, 0.95, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &s)| det("A", &format!("x_part{:03}", i + 1), s))
            .collect();
        let items = build_review_set(&dets, Some(3));
        let got: Vec<(usize, f64)> = items.iter().map(|i| (i.rank, i.score)).collect();
        assert_eq!(got, [(1, 0.95), (2, 0.9), (3, 0.8)]);
    }

    #[test]
    fn ties_go_to_lower_clip_id() {
        let items = build_review_set(&[det("A", "b_part001", 0.99), det("A", "a_part001", 0.99)], None);
        assert_eq!(items[0].clip_id, "a_part001");
        assert_eq!(items[1].clip_id, "b_part001");
    }

    #[test]
    fn grouped_by_class_with_contiguous_ranks() {
        let dets = vec![
            det("B", "x_part001", 0.7),
            det("A", "x_part001", 0.6),
            det("B", "x_part002", 0.8),
            det("A", "x_part002", 0.9),
        ];
        let items = build_review_set(&dets, None);
        let got: Vec<(&str, usize, &str)> = items
            .iter()
            .map(|i| (i.class_code.as_str(), i.rank, i.clip_id.as_str()))
            .collect();
        assert_eq!(
            got,
            [("A", 1, "x_part002"), ("A", 2, "x_part001"), ("B", 1, "x_part002"), ("B", 2, "x_part001")]
        );
    }

    proptest! {
        #[test]
        fn review_set_is_a_ranked_subset(
            raw in proptest::collection::vec((0usize..3, 0u8..20, 0usize..30), 0..60),
            cap in proptest::option::of(0usize..10),
        ) {
            let mut dets: Vec<Detection> = raw.iter()
                .map(|&(c, s, id)| det(["A", "B", "C"][c], &format!("x_part{:03}", id + 1), f64::from(s) / 20.0))
                .collect();
            dets.sort_by(|a, b| (&a.class_code, &a.clip_id).cmp(&(&b.class_code, &b.clip_id)));
            dets.dedup_by(|a, b| a.class_code == b.class_code && a.clip_id == b.clip_id);
            let items = build_review_set(&dets, cap);
            if cap.is_none() {
                prop_assert_eq!(items.len(), dets.len());
            }
            for it in &items {
                prop_assert!(dets.iter().any(|d| d.class_code == it.class_code && d.clip_id == it.clip_id && d.score == it.score));
            }
            for w in items.windows(2) {
                if w[0].class_code == w[1].class_code {
                    prop_assert_eq!(w[1].rank, w[0].rank + 1);
                    prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].clip_id < w[1].clip_id));
                } else {
                    prop_assert!(w[0].class_code < w[1].class_code);
                    prop_assert_eq!(w[1].rank, 1);
                }
            }
        }
    }

    fn clip(start: f64, length: f64) -> Clip {
        Clip {
            source: "x.wav".into(),
            index: (start / length) as usize,
            start,
            length,
            pad: 0.0,
        }
    }

    #[test]
    fn extracted_window_matches_source() {
        let dir = tempdir().unwrap();
        let src = dir.path().join("src.wav");
        let rate = 8000;
        let mut rng = XorShift::new(11);
        let x: Vec<f32> = (0..rate as usize * 60)
            .map(|_| (rng.next_f64() * 1.6 - 0.8) as f32)
            .collect();
        write_mono_i16(&src, &x, rate).unwrap();
        let out = dir.path().join("review/A/x_part002.wav");
        extract_clip(&src, &clip(12.0, 12.0), &out).unwrap();
        let got = media_io::decode(&out).unwrap();
        assert_eq!(got.sample_rate, rate);
        assert_eq!(got.len(), 12 * rate as usize);
        let first = 12 * rate as usize;
        for (i, &v) in got.samples.iter().enumerate() {
            assert!((v - x[first + i]).abs() <= 1.0 / 32768.0, "sample {i}");
        }
    }

    #[test]
    fn padded_tail_is_silent() {
        let dir = tempdir().unwrap();
        let src = dir.path().join("src.wav");
        let rate = 16000;
        // 30 s: the third 12 s clip has 6 s of audio and 6 s of padding.
        write_mono_i16(&src, &tone(500.0, rate, 30 * rate as usize, 0.5), rate).unwrap();
        let out = dir.path().join("c.wav");
        extract_clip(&src, &Clip { pad: 6.0, ..clip(24.0, 12.0) }, &out).unwrap();
        let got = media_io::decode(&out).unwrap();
        assert_eq!(got.len(), 12 * rate as usize);
        let half = 6 * rate as usize;
        assert!(got.samples[..half].iter().any(|&v| v != 0.0));
        assert!(got.samples[half..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn silent_source_gives_silent_clip() {
        let dir = tempdir().unwrap();
        let src = dir.path().join("z.wav");
        write_mono_i16(&src, &vec![0.0; 16000 * 24], 16000).unwrap();
        let out = dir.path().join("z_part001.wav");
        extract_clip(&src, &clip(0.0, 12.0), &out).unwrap();
        assert!(media_io::decode(&out).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_source_propagates() {
        let dir = tempdir().unwrap();
        assert!(matches!(
            extract_clip(&dir.path().join("nope.wav"), &clip(0.0, 12.0), &dir.path().join("o.wav")),
            Err(ReviewError::Media(MediaError::IoFailure { .. }))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempdir().unwrap();
        let mut items = build_review_set(
            &[det("A", "x_part001", 0.91234), det("A", "x_part002", 0.5), det("B", "x_part001", 0.7)],
            None,
        );
        for it in &mut items {
            it.clip_audio_path = review_clip_path(it);
        }
        let (p1, p2) = (dir.path().join("m1.csv"), dir.path().join("m2.csv"));
        write_review_manifest(&items, &p1).unwrap();
        let text = std::fs::read_to_string(&p1).unwrap();
        assert_eq!(
            text.lines().take(2).collect::<Vec<_>>(),
            [
                "class,rank,clip_id,source,start_s,score,clip_audio_path,verdict",
                "A,1,x_part001,a/x.wav,0.0,0.9123,review/A/x_part001.wav,"
            ]
        );
        write_review_manifest(&read_review_manifest(&p1).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn manifest_with_schema_line_and_verdicts() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(
            &p,
            "#schema=1\nclass,rank,clip_id,source,start_s,score,clip_audio_path,verdict\nA,1,x_part001,x.wav,0.0,0.9000,,Y\nA,2,x_part002,x.wav,12.0,0.8000,,U\n",
        )
        .unwrap();
        let items = read_review_manifest(&p).unwrap();
        assert_eq!(items[0].verdict, Some(Verdict::Yes));
        assert_eq!(items[1].verdict, Some(Verdict::Unsure));
        assert_eq!(items[1].start, 12.0);

        std::fs::write(
            &p,
            "class,rank,clip_id,source,start_s,score,clip_audio_path,verdict\nA,1,x_part001,x.wav,0.0,0.9,,maybe\n",
        )
        .unwrap();
        assert!(matches!(read_review_manifest(&p), Err(ReviewError::RowParseFailure { line: 2, .. })));
    }

    #[test]
    fn empty_manifest_is_header_only() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_review_manifest(&[], &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "class,rank,clip_id,source,start_s,score,clip_audio_path,verdict\n"
        );
        assert!(read_review_manifest(&p).unwrap().is_empty());
    }
}
