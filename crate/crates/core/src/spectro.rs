//! Clip segmentation and spectrogram tiles.
//!
//! A recording is cut into clips of `clip_length` seconds starting at offset
//! zero; a trailing partial clip survives only when it holds at least
//! `min_tail` seconds of audio, and is zero-padded to full length. Each clip
//! becomes a tile of `n_fft/2 + 1` frequency rows by `target_width` time
//! columns, with intensities in `[0, 1]` derived from per-tile normalized dB.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::media_io::AudioMetadata;

#[derive(Debug, Error)]
pub enum SpectroError {
    #[error("invalid spectrogram configuration: {0}")]
    InvalidConfig(String),
    #[error("png failure on {path}: {reason}")]
    Png { path: PathBuf, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectroConfig {
    /// Hz; audio is resampled to this rate before analysis.
    pub working_rate: u32,
    /// Seconds per clip.
    pub clip_length: f64,
    /// Hann window length in samples; a power of two.
    pub n_fft: usize,
    /// Tile width in STFT frames.
    pub target_width: usize,
    pub db_floor: f64,
    pub db_ceiling: f64,
    /// Shortest trailing partial clip (seconds) that is kept.
    pub min_tail: f64,
}

impl Default for SpectroConfig {
    fn default() -> Self {
        Self {
            working_rate: 16_000,
            clip_length: 12.0,
            n_fft: 512,
            target_width: 1000,
            db_floor: -80.0,
            db_ceiling: 0.0,
            min_tail: 1.0,
        }
    }
}

impl SpectroConfig {
    pub fn validate(&self) -> Result<(), SpectroError> {
        let bad = |m: String| Err(SpectroError::InvalidConfig(m));
        if self.working_rate == 0 {
            return bad("working_rate must be positive".into());
        }
        if !(self.clip_length.is_finite() && self.clip_length > 0.0) {
            return bad(format!("clip_length {} must be positive", self.clip_length));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return bad(format!("n_fft {} must be a power of two", self.n_fft));
        }
        if self.target_width == 0 {
            return bad("target_width must be positive".into());
        }
        if self.db_floor.partial_cmp(&self.db_ceiling) != Some(std::cmp::Ordering::Less) {
            return bad(format!(
                "db_floor {} must be below db_ceiling {}",
                self.db_floor, self.db_ceiling
            ));
        }
        if !(self.min_tail > 0.0 && self.min_tail <= self.clip_length) {
            return bad(format!(
                "min_tail {} must lie in (0, clip_length]",
                self.min_tail
            ));
        }
        if self.clip_samples() < self.target_width {
            return bad(format!(
                "clip of {} samples is shorter than target_width {}",
                self.clip_samples(),
                self.target_width
            ));
        }
        Ok(())
    }

    /// Samples per clip at the working rate.
    pub fn clip_samples(&self) -> usize {
        (self.clip_length * f64::from(self.working_rate)).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frequency spacing of tile rows in Hz.
    pub fn bin_hz(&self) -> f64 {
        f64::from(self.working_rate) / self.n_fft as f64
    }

    pub fn tile_shape(&self) -> (usize, usize) {
        (self.n_bins(), self.target_width)
    }
}

/// A fixed-length window of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    /// Path of the parent recording (relative to the target directory in a pipeline run).
    pub source: String,
    /// 0-based position within the recording.
    pub index: usize,
    /// Offset in seconds, `index * length`.
    pub start: f64,
    /// Seconds; the configured clip length.
    pub length: f64,
    /// Seconds of zero padding at the end (0 for full clips).
    pub pad: f64,
}

impl Clip {
    /// `<source-stem>_part<NNN>`, with a 1-based, zero-padded part number.
    pub fn clip_id(&self) -> String {
        clip_id(source_stem(&self.source), self.index)
    }
}

/// File name of `path` without directories or extension.
pub fn source_stem(path: &str) -> &str {
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    match name.rfind('.') {
        Some(i) if i > 0 => &name[..i],
        _ => name,
    }
}

pub fn clip_id(stem: &str, index: usize) -> String {
    format!("{stem}_part{:03}", index + 1)
}

/// Splits a clip id into its source stem and 0-based clip index.
pub fn parse_clip_id(id: &str) -> Option<(&str, usize)> {
    let (stem, part) = id.rsplit_once("_part")?;
    if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: usize = part.parse().ok()?;
    (n >= 1).then(|| (stem, n - 1))
}

/// Clips for a recording of `n_frames` at `sample_rate`, computed on whole samples.
pub fn segment_frames(source: &str, n_frames: u64, sample_rate: u32, cfg: &SpectroConfig) -> Vec<Clip> {
    let rate = f64::from(sample_rate);
    let clip_frames = ((cfg.clip_length * rate).round() as u64).max(1);
    let tail_frames = ((cfg.min_tail * rate).round() as u64).max(1);
    let full = n_frames / clip_frames;
    let remainder = n_frames % clip_frames;

    let mut clips: Vec<Clip> = (0..full as usize)
        .map(|index| Clip {
            source: source.to_string(),
            index,
            start: index as f64 * cfg.clip_length,
            length: cfg.clip_length,
            pad: 0.0,
        })
        .collect();
    if remainder >= tail_frames {
        let index = full as usize;
        clips.push(Clip {
            source: source.to_string(),
            index,
            start: index as f64 * cfg.clip_length,
            length: cfg.clip_length,
            pad: cfg.clip_length - remainder as f64 / rate,
        });
    }
    clips
}

/// Clips covering the recording described by `meta`.
pub fn segment(meta: &AudioMetadata, cfg: &SpectroConfig) -> Vec<Clip> {
    segment_frames(
        &meta.path.to_string_lossy(),
        meta.n_frames,
        meta.sample_rate,
        cfg,
    )
}

/// Frames × bins power values, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl PowerGrid {
    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Reusable STFT state (window and FFT plan) for one configuration.
pub struct Spectrogram {
    cfg: SpectroConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Spectrogram {
    pub fn new(cfg: &SpectroConfig) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Self {
            cfg: cfg.clone(),
            window: hann_window(cfg.n_fft),
            fft,
        }
    }

    pub fn config(&self) -> &SpectroConfig {
        &self.cfg
    }

    /// Power spectrogram with exactly `target_width` frames.
    ///
    /// Frames start every `hop = floor(len / target_width)` samples. Samples
    /// at or beyond `target_width * hop` are ignored, so the last frames are
    /// partly zero-filled.
    pub fn power<T: Copy + Into<f64>>(&self, segment: &[T]) -> PowerGrid {
        let n_fft = self.cfg.n_fft;
        let bins = self.cfg.n_bins();
        let frames = self.cfg.target_width;
        let hop = (segment.len() / frames).max(1);
        let used = segment.len().min(frames * hop);
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];

        for f in 0..frames {
            let start = f * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = start + i;
                let x = if idx < used { segment[idx].into() } else { 0.0 };
                *slot = Complex::new(x * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            data.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
        }
        PowerGrid { frames, bins, data }
    }

    /// Renders one clip of a working-rate recording, zero-padding past its end.
    pub fn render_clip(&self, samples: &[f32], clip: &Clip) -> Tile {
        let len = self.cfg.clip_samples();
        let start = clip.index * len;
        let mut segment = vec![0.0f32; len];
        if start < samples.len() {
            let end = (start + len).min(samples.len());
            segment[..end - start].copy_from_slice(&samples[start..end]);
        }
        to_tile(&self.power(&segment), clip.clone(), &self.cfg)
    }
}

/// One-shot form of [`Spectrogram::power`].
pub fn stft_power<T: Copy + Into<f64>>(segment: &[T], cfg: &SpectroConfig) -> PowerGrid {
    Spectrogram::new(cfg).power(segment)
}

/// Spectrogram image of one clip: rows are frequency bins (row 0 lowest),
/// columns are time frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub clip: Clip,
    pub height: usize,
    pub width: usize,
    /// Hz between adjacent rows; row `r` is centred on `r * bin_hz`.
    pub bin_hz: f64,
    /// Row-major, `height * width` values in `[0, 1]`.
    pub intensities: Vec<f32>,
}

impl Tile {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.intensities[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.intensities[row * self.width..(row + 1) * self.width]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Normalizes a power grid to the tile's own maximum, maps dB onto `[0, 1]`
/// between `db_floor` and `db_ceiling`, and transposes to frequency rows.
pub fn to_tile(grid: &PowerGrid, clip: Clip, cfg: &SpectroConfig) -> Tile {
    let height = grid.bins;
    let width = grid.frames;
    let max = grid.data.iter().copied().fold(0.0, f64::max);
    let mut intensities = vec![0.0f32; height * width];
    if max > 0.0 {
        let span = cfg.db_ceiling - cfg.db_floor;
        for f in 0..width {
            for (b, &p) in grid.frame(f).iter().enumerate() {
                let db = (10.0 * (p / max).log10()).clamp(cfg.db_floor, cfg.db_ceiling);
                intensities[b * width + f] = ((db - cfg.db_floor) / span) as f32;
            }
        }
    }
    Tile {
        clip,
        height,
        width,
        bin_hz: cfg.bin_hz(),
        intensities,
    }
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> SpectroError {
    SpectroError::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Writes an 8-bit grayscale PNG with the highest frequency in image row 0.
pub fn write_tile_png(tile: &Tile, out_path: &Path) -> Result<(), SpectroError> {
    let file = File::create(out_path).map_err(|source| SpectroError::IoFailure {
        path: out_path.to_path_buf(),
        source,
    })?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), tile.width as u32, tile.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| png_err(out_path, e))?;
    let pixels: Vec<u8> = (0..tile.height)
        .rev()
        .flat_map(|row| tile.row(row).iter().map(|&v| (v * 255.0).round() as u8))
        .collect();
    writer
        .write_image_data(&pixels)
        .map_err(|e| png_err(out_path, e))?;
    writer.finish().map_err(|e| png_err(out_path, e))
}

/// Reads a tile written by [`write_tile_png`]; intensities are quantized to `k/255`.
pub fn read_tile_png(path: &Path, clip: Clip, bin_hz: f64) -> Result<Tile, SpectroError> {
    let file = File::open(path).map_err(|source| SpectroError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let decoder = png::Decoder::new(io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(png_err(path, "expected 8-bit grayscale"));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let mut intensities = vec![0.0f32; width * height];
    for img_row in 0..height {
        let row = height - 1 - img_row;
        for col in 0..width {
            intensities[row * width + col] = f32::from(buf[img_row * stride + col]) / 255.0;
        }
    }
    Ok(Tile {
        clip,
        height,
        width,
        bin_hz,
        intensities,
    })
}
