//! Score tiles with the reference backend and write a scores CSV.
//!
//!     cargo run --example score_tiles

use pamflow::classify::{load_class_list, predict_batch, read_scores, write_scores, ReferenceBackend};
use pamflow::spectro::{Clip, SpectroConfig, Spectrogram};
use pamflow::synth::{tone, write_tone_class_list};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let list = dir.path().join("classes.csv");
    write_tone_class_list(&list, &[1000.0, 2000.0, 3000.0], 0.5)?;
    let classes = load_class_list(&list)?;

    let cfg = SpectroConfig::default();
    let spectro = Spectrogram::new(&cfg);
    let tiles: Vec<_> = [1000.0, 3000.0, 5000.0]
        .iter()
        .enumerate()
        .map(|(i, &hz)| {
            let samples = tone(hz, cfg.working_rate, cfg.clip_samples(), 0.5);
            let mut tile = spectro.render_clip(
                &samples,
                &Clip {
                    source: "demo/DEMO-01_20240101_000000.wav".into(),
                    index: 0,
                    start: 0.0,
                    length: cfg.clip_length,
                    pad: 0.0,
                },
            );
            tile.clip.index = i;
            tile.clip.start = i as f64 * cfg.clip_length;
            tile
        })
        .collect();

    let backend = ReferenceBackend::new(classes.len());
    let rows = predict_batch(&backend, &tiles, &classes)?;
    let out = dir.path().join("scores.csv");
    write_scores(&rows, &classes, &out)?;
    print!("{}", std::fs::read_to_string(&out)?);

    let table = read_scores(&out)?;
    println!("read back {} rows x {} classes", table.rows.len(), table.codes.len());
    Ok(())
}
