//! Batch processing for passive acoustic monitoring archives.
//!
//! The pipeline inventories a tree of field recordings, cuts each recording
//! into fixed-length clips, renders every clip as a fixed-size spectrogram
//! tile, scores tiles with a pluggable multi-label classifier, filters the
//! scores into per-class apparent detections, and writes summary tables plus
//! ranked review material for human confirmation.
//!
//! | stage | module |
//! |-------|--------|
//! | WAV decoding, resampling | [`media_io`] |
//! | file discovery, filename parsing | [`inventory`] |
//! | clips and spectrogram tiles | [`spectro`] |
//! | class lists, backends, score tables | [`classify`] |
//! | thresholds, merging, station-day summaries | [`detect`] |
//! | review manifests and audio excerpts | [`review`] |
//! | argument parsing and orchestration | [`cli`] |

mod csvio;

pub mod classify;
pub mod cli;
pub mod detect;
pub mod inventory;
pub mod media_io;
pub mod numfmt;
pub mod review;
pub mod spectro;
pub mod synth;
