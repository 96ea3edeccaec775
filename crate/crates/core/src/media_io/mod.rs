//! Uncompressed audio input: RIFF/WAVE header parsing, PCM decoding with
//! mono mixdown, and band-limited resampling to the working rate.

mod resample;
mod wav;

pub use resample::{resample, KERNEL_HALF_WIDTH};
pub use wav::{decode, quantize_i16, read_metadata, write_wav_i16};

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading or decoding audio files.
#[derive(Debug, Error)]
pub enum MediaError {
    #[error("malformed WAV header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("unsupported encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },
    #[error("payload truncated in {path}: header declares {declared} frames, found {found}")]
    PayloadTruncated {
        path: PathBuf,
        declared: u64,
        found: u64,
    },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Sample encoding of a WAV payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    /// Integer PCM. 8-bit is unsigned, wider widths are signed.
    Int,
    /// IEEE float (32-bit only).
    Float,
}

/// Header-derived description of one audio file.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioMetadata {
    pub path: PathBuf,
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub format: SampleFormat,
    pub n_frames: u64,
    /// Seconds, `n_frames / sample_rate`.
    pub duration: f64,
    pub(crate) data_offset: u64,
}

impl AudioMetadata {
    pub fn bytes_per_frame(&self) -> u64 {
        u64::from(self.channels) * u64::from(self.bits_per_sample / 8)
    }
}

/// Mono samples in `[-1, 1]` at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}
