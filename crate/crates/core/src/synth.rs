//! Synthetic recordings for examples, tests and benchmarks.
//!
//! Everything here is deterministic: the same arguments always produce the
//! same bytes on disk.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};

use crate::media_io::{quantize_i16, write_wav_i16, MediaError};

/// Raw fmt/data description for writing arbitrary (including invalid) WAV files.
#[derive(Debug, Clone)]
pub struct RawWav {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate: u32,
    pub bits_per_sample: u16,
    pub payload: Vec<u8>,
}

/// Writes a minimal RIFF/WAVE file with the given fmt fields and payload bytes.
pub fn write_wav_raw(path: impl AsRef<Path>, wav: &RawWav) -> io::Result<()> {
    let block_align = wav.channels * (wav.bits_per_sample / 8).max(1);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + wav.payload.len() as u32).to_le_bytes())?;
    w.write_all(b"WAVEfmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&wav.format_tag.to_le_bytes())?;
    w.write_all(&wav.channels.to_le_bytes())?;
    w.write_all(&wav.sample_rate.to_le_bytes())?;
    w.write_all(&(wav.sample_rate * u32::from(block_align)).to_le_bytes())?;
    w.write_all(&block_align.to_le_bytes())?;
    w.write_all(&wav.bits_per_sample.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&(wav.payload.len() as u32).to_le_bytes())?;
    w.write_all(&wav.payload)?;
    w.flush()
}

/// `n` samples of `amp * sin(2π f t)` at `rate`.
pub fn tone(freq: f64, rate: u32, n: usize, amp: f64) -> Vec<f32> {
    (0..n)
        .map(|i| (amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
        .collect()
}

/// Small xorshift generator so fixtures stay reproducible without extra dependencies.
#[derive(Debug, Clone)]
pub struct XorShift(u64);

impl XorShift {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Quantizes mono samples to 16-bit and writes them.
pub fn write_mono_i16(path: impl AsRef<Path>, samples: &[f32], rate: u32) -> Result<(), MediaError> {
    let pcm: Vec<i16> = samples
        .iter()
        .map(|&s| quantize_i16(s))
        .collect();
    write_wav_i16(path, &pcm, rate, 1)
}

/// A tone placed in one clip of a synthetic recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    /// Path relative to the corpus root.
    pub file: String,
    /// 0-based clip index within the file.
    pub clip_index: usize,
    /// Index into [`CorpusSpec::tone_hz`].
    pub class_index: usize,
}

/// Layout of a synthetic monitoring corpus.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_files: usize,
    pub file_seconds: f64,
    pub clip_seconds: f64,
    pub sample_rate: u32,
    /// One tone frequency per synthetic class.
    pub tone_hz: Vec<f64>,
    pub tone_amplitude: f64,
    /// Peak amplitude of the uniform background noise.
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_files: 20,
            file_seconds: 60.0,
            clip_seconds: 12.0,
            sample_rate: 16_000,
            tone_hz: vec![1000.0, 2000.0, 3000.0],
            tone_amplitude: 0.5,
            noise_amplitude: 1e-5,
            seed: 7,
        }
    }
}

/// Writes `spec.n_files` recordings under `root` using ARU-style names spread
/// across four stations, and returns the injected ground truth.
///
/// Each clip receives at most one tone, chosen by a fixed pattern so that
/// every class appears and some clips stay noise-only.
pub fn write_tone_corpus(root: &Path, spec: &CorpusSpec) -> Result<Vec<Injection>, MediaError> {
    const STATIONS: [&str; 4] = ["CLE-01", "CLE-02", "HJA-01", "HJA-02"];
    let base = NaiveDateTime::parse_from_str("2023-05-15 21:00:00", "%Y-%m-%d %H:%M:%S")
        .expect("valid literal");
    let n_total = (spec.file_seconds * f64::from(spec.sample_rate)).round() as usize;
    let clip_len = (spec.clip_seconds * f64::from(spec.sample_rate)).round() as usize;
    let n_classes = spec.tone_hz.len();
    let mut rng = XorShift::new(spec.seed);
    let mut truth = Vec::new();

    for f in 0..spec.n_files {
        let station = STATIONS[f % STATIONS.len()];
        // Files at two-hour steps so a station's recordings straddle midnight.
        let start = base + Duration::hours(2 * (f / STATIONS.len()) as i64);
        let rel = format!(
            "{}/{}_{}.wav",
            station.split('-').next().unwrap_or(station),
            station,
            start.format("%Y%m%d_%H%M%S")
        );
        let path: PathBuf = root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| MediaError::IoFailure {
                path: parent.to_path_buf(),
                source,
            })?;
        }

        let mut samples: Vec<f32> = (0..n_total)
            .map(|_| (spec.noise_amplitude * (2.0 * rng.next_f64() - 1.0)) as f32)
            .collect();
        let n_clips = n_total.checked_div(clip_len).unwrap_or(0);
        for c in 0..n_clips {
            let slot = (f * 7 + c * 3) % (n_classes + 2);
            if slot >= n_classes {
                continue;
            }
            let t = tone(spec.tone_hz[slot], spec.sample_rate, clip_len, spec.tone_amplitude);
            for (dst, src) in samples[c * clip_len..(c + 1) * clip_len].iter_mut().zip(t) {
                *dst += src;
            }
            truth.push(Injection {
                file: rel.clone(),
                clip_index: c,
                class_index: slot,
            });
        }
        write_mono_i16(&path, &samples, spec.sample_rate)?;
    }
    Ok(truth)
}

/// Writes a class list CSV with one class per tone, each band ±100 Hz around it.
pub fn write_tone_class_list(path: &Path, tone_hz: &[f64], threshold: f64) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "code,label,threshold,band_low_hz,band_high_hz")?;
    for (i, f) in tone_hz.iter().enumerate() {
        writeln!(
            w,
            "TONE{},Synthetic tone {} Hz,{},{},{}",
            i + 1,
            f,
            threshold,
            f - 100.0,
            f + 100.0
        )?;
    }
    w.flush()
}
