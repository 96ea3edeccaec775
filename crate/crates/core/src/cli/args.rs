use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{CommandFactory, Parser, ValueEnum};

use super::{Mode, RunConfig, ThresholdOverrides, UsageError};
use crate::spectro::SpectroConfig;

#[derive(Debug, Parser)]
#[command(
    name = "pamflow",
    version,
    about = "Batch classification of passive acoustic monitoring recordings",
    after_help = "Outputs go to <TARGET_DIR>/_outputs unless -o is given.\n\
                  Workers default to $PIPELINE_WORKERS, else the CPU count capped at 8."
)]
struct Cli {
    /// Processing task
    #[arg(value_enum)]
    mode: Mode,

    /// Directory tree holding the recordings
    target_dir: PathBuf,

    /// Worker threads
    #[arg(short, long, env = "PIPELINE_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    /// Class list CSV (code,label,threshold,band_low_hz,band_high_hz)
    #[arg(short, long, value_name = "PATH")]
    class_list: Option<PathBuf>,

    /// Backend manifest; the built-in reference backend when omitted
    #[arg(short = 'm', long, value_name = "PATH")]
    backend: Option<PathBuf>,

    /// Output directory
    #[arg(short, long, value_name = "PATH")]
    output_dir: Option<PathBuf>,

    /// Threshold override, CODE=V for one class or V for all; repeatable
    #[arg(short, long = "threshold", value_name = "CODE=V", value_parser = parse_threshold)]
    thresholds: Vec<(Option<String>, f64)>,

    /// Clip length in seconds
    #[arg(long, value_name = "SECONDS")]
    clip_length: Option<f64>,

    /// Review items kept per class; unlimited when omitted
    #[arg(long, value_name = "N")]
    cap: Option<usize>,

    /// Write spectrogram tiles to disk during `process`
    #[arg(short, long)]
    keep_spectrograms: bool,

    /// Suppress per-file progress lines
    #[arg(short, long)]
    quiet: bool,

    /// Audio file extension to inventory; repeatable
    #[arg(long = "ext", value_name = "EXT", default_value = "wav")]
    extensions: Vec<String>,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("threshold {v} outside [0, 1]"))
    }
}

fn parse_threshold(s: &str) -> Result<(Option<String>, f64), String> {
    match s.split_once('=') {
        Some((code, v)) if !code.trim().is_empty() => Ok((Some(code.trim().to_string()), parse_unit(v)?)),
        Some(_) => Err(format!("`{s}` has an empty class code")),
        None => Ok((None, parse_unit(s)?)),
    }
}

/// Usage error with the synopsis appended, matching clap's own errors.
fn usage(message: impl Into<String>) -> UsageError {
    UsageError {
        message: format!("error: {}\n\n{}\n", message.into(), Cli::command().render_usage()),
        is_help: false,
    }
}

/// Parses `argv` (program name first) into a validated run configuration.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let is_help = matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        );
        let mut message = e.render().to_string();
        if !is_help && !message.contains("Usage:") {
            message = format!("{}\n\n{}\n", message.trim_end(), Cli::command().render_usage());
        }
        UsageError { message, is_help }
    })?;

    if !cli.target_dir.is_dir() {
        return Err(usage(format!(
            "target directory {} does not exist",
            cli.target_dir.display()
        )));
    }
    let needs_classes = matches!(cli.mode, Mode::Process | Mode::Predict | Mode::Review);
    if needs_classes && cli.class_list.is_none() && cli.backend.is_none() {
        return Err(usage(format!(
            "mode {} needs a class list (-c) or a backend manifest naming one (-m)",
            cli.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
        )));
    }

    let mut spectro = SpectroConfig::default();
    if let Some(len) = cli.clip_length {
        spectro.clip_length = len;
        spectro.min_tail = spectro.min_tail.min(len);
    }
    spectro.validate().map_err(|e| usage(e.to_string()))?;

    let mut thresholds = ThresholdOverrides::default();
    for (code, v) in cli.thresholds {
        match code {
            Some(c) => {
                thresholds.by_code.insert(c, v);
            }
            None => thresholds.all = Some(v),
        }
    }

    let mut cfg = RunConfig::new(cli.mode, cli.target_dir);
    if let Some(out) = cli.output_dir {
        cfg.output_dir = out;
    }
    if let Some(w) = cli.workers {
        cfg.workers = usize::from(w);
    }
    cfg.class_list = cli.class_list;
    cfg.backend_manifest = cli.backend;
    cfg.spectro = spectro;
    cfg.thresholds = thresholds;
    cfg.per_class_cap = cli.cap;
    cfg.keep_spectrograms = cli.keep_spectrograms;
    cfg.quiet = cli.quiet;
    cfg.extensions = cli
        .extensions
        .iter()
        .map(|e| e.trim_start_matches('.').to_lowercase())
        .collect::<BTreeSet<_>>();
    Ok(cfg)
}

impl ThresholdOverrides {
    /// Per-class map: the blanket value for every class, then per-code values.
    pub fn resolve(&self, codes: impl IntoIterator<Item = impl Into<String>>) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if let Some(all) = self.all {
            out.extend(codes.into_iter().map(|c| (c.into(), all)));
        }
        out.extend(self.by_code.iter().map(|(k, &v)| (k.clone(), v)));
        out
    }
}
