//! Cut a recording into clips and render each as a spectrogram tile PNG.
//!
//!     cargo run --example render_spectrogram [out_dir]

use pamflow::media_io::{decode, read_metadata, resample};
use pamflow::spectro::{segment, write_tile_png, SpectroConfig, Spectrogram};
use pamflow::synth::{tone, write_mono_i16};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let out_dir = std::env::args().nth(1).map_or_else(|| dir.path().to_path_buf(), Into::into);
    std::fs::create_dir_all(&out_dir)?;

    // 30 s at 22.05 kHz: a rising sweep of tones, one per 6 s.
    let rate = 22_050;
    let mut x = Vec::new();
    for hz in [800.0, 1600.0, 2400.0, 3200.0, 4000.0] {
        x.extend(tone(hz, rate, 6 * rate as usize, 0.4));
    }
    let wav = dir.path().join("sweep.wav");
    write_mono_i16(&wav, &x, rate)?;

    let cfg = SpectroConfig::default();
    let clips = segment(&read_metadata(&wav)?, &cfg);
    let samples = resample(decode(&wav)?, cfg.working_rate).samples;
    let spectro = Spectrogram::new(&cfg);
    for clip in &clips {
        let tile = spectro.render_clip(&samples, clip);
        // Row with the most energy, as a frequency.
        let loudest = (0..tile.height)
            .max_by(|&a, &b| {
                let sum = |r| tile.row(r).iter().map(|&v| f64::from(v)).sum::<f64>();
                sum(a).total_cmp(&sum(b))
            })
            .unwrap_or(0);
        let png = out_dir.join(format!("{}.png", clip.clip_id()));
        write_tile_png(&tile, &png)?;
        println!(
            "{} start {:>4.1}s pad {:>4.1}s  {}x{} tile, loudest row {:.0} Hz -> {}",
            clip.clip_id(),
            clip.start,
            clip.pad,
            tile.height,
            tile.width,
            loudest as f64 * tile.bin_hz,
            png.display()
        );
    }
    Ok(())
}
