//! Decode a WAV file and bring it to the 16 kHz working rate.
//!
//!     cargo run --example decode_and_resample [path.wav]

use pamflow::media_io::{decode, read_metadata, resample};
use pamflow::synth::{tone, write_mono_i16};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            // Two seconds of 440 Hz at 44.1 kHz.
            let p = dir.path().join("a440.wav");
            write_mono_i16(&p, &tone(440.0, 44_100, 88_200, 0.5), 44_100)?;
            p
        }
    };

    let meta = read_metadata(&path)?;
    println!(
        "{}: {} Hz, {} ch, {}-bit {:?}, {} frames ({:.3} s)",
        path.display(),
        meta.sample_rate,
        meta.channels,
        meta.bits_per_sample,
        meta.format,
        meta.n_frames,
        meta.duration
    );

    let native = decode(&path)?;
    let peak = native.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let working = resample(native, 16_000);
    println!(
        "resampled to {} Hz: {} samples, {:.3} s, input peak {peak:.3}",
        working.sample_rate,
        working.len(),
        working.duration()
    );
    Ok(())
}
