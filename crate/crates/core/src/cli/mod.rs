//! Command-line front end: `pamflow <mode> <target_dir> [options]`.
//!
//! Output layout under the output directory:
//!
//! ```text
//! inventory.csv
//! tiles/<stem>/<clip_id>.png     spectro, or process with -k
//! parts/*.csv                    score tables for combine
//! scores.csv
//! detections.csv
//! summary.csv
//! review_manifest.csv
//! review/<class>/<clip_id>.wav   review mode
//! ```

mod args;
mod pipeline;
mod progress;

pub use args::parse_args;
pub use pipeline::{run, Layout};
pub use progress::{done_line, Progress};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use thiserror::Error;

use crate::classify::ClassifyError;
use crate::detect::DetectError;
use crate::inventory::InventoryError;
use crate::media_io::MediaError;
use crate::review::ReviewError;
use crate::spectro::{SpectroConfig, SpectroError};

/// Default name of the output directory inside the target tree.
pub const DEFAULT_OUTPUT_DIR: &str = "_outputs";
pub const WORKERS_ENV: &str = "PIPELINE_WORKERS";
pub const MAX_DEFAULT_WORKERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// inventory, tiles, scores, detections, summary and review manifest
    Process,
    /// scan and write inventory.csv
    Inventory,
    /// write spectrogram tiles to disk
    Spectro,
    /// score tiles into scores.csv
    Predict,
    /// merge parts/*.csv into scores.csv
    Combine,
    /// detections, summary, review manifest and audio excerpts from scores.csv
    Review,
    /// remove tiles and score parts
    Cleanup,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_possible_value().expect("no skipped variants");
        f.write_str(v.get_name())
    }
}

/// Threshold overrides from the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThresholdOverrides {
    /// Applies to every class.
    pub all: Option<f64>,
    /// Wins over `all`.
    pub by_code: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub target_dir: PathBuf,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub class_list: Option<PathBuf>,
    /// Backend manifest; `None` selects the reference backend.
    pub backend_manifest: Option<PathBuf>,
    pub spectro: SpectroConfig,
    pub thresholds: ThresholdOverrides,
    /// `None` is unlimited.
    pub per_class_cap: Option<usize>,
    pub keep_spectrograms: bool,
    pub quiet: bool,
    pub extensions: BTreeSet<String>,
}

impl RunConfig {
    /// Defaults for everything but mode and target.
    pub fn new(mode: Mode, target_dir: impl Into<PathBuf>) -> Self {
        let target_dir = target_dir.into();
        Self {
            mode,
            output_dir: target_dir.join(DEFAULT_OUTPUT_DIR),
            target_dir,
            workers: default_workers(),
            class_list: None,
            backend_manifest: None,
            spectro: SpectroConfig::default(),
            thresholds: ThresholdOverrides::default(),
            per_class_cap: None,
            keep_spectrograms: false,
            quiet: false,
            extensions: BTreeSet::from(["wav".to_string()]),
        }
    }
}

/// Available CPUs, capped.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(MAX_DEFAULT_WORKERS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: Mode,
    pub files_seen: usize,
    pub clips_generated: usize,
    pub rows_scored: usize,
    pub detections: usize,
    /// Seconds.
    pub elapsed: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            files_seen: 0,
            clips_generated: 0,
            rows_scored: 0,
            detections: 0,
            elapsed: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// Bad command line. `--help` and `--version` also arrive here, flagged.
#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct UsageError {
    pub message: String,
    pub is_help: bool,
}

impl UsageError {
    pub fn exit_code(&self) -> i32 {
        if self.is_help {
            0
        } else {
            2
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Spectro(#[from] SpectroError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("no processable audio files under {0}")]
    NothingToProcess(PathBuf),
    #[error("required input {0} is missing")]
    MissingInput(PathBuf),
    #[error("no class list: pass -c or name one in the backend manifest")]
    NoClassList,
    #[error("score columns {found:?} do not match class list codes {expected:?}")]
    ClassMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}
