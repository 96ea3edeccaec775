//! Rank detections for review and extract their audio.
//!
//!     cargo run --example review_clips

use pamflow::detect::Detection;
use pamflow::review::{build_review_set, extract_clip, review_clip_path, write_review_manifest};
use pamflow::spectro::Clip;
use pamflow::synth::{tone, write_mono_i16};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let source = "CLE/CLE-01_20230515_210000.wav";
    let wav = dir.path().join(source);
    std::fs::create_dir_all(wav.parent().unwrap())?;
    write_mono_i16(&wav, &tone(1000.0, 32_000, 32_000 * 60, 0.5), 32_000)?;

    let dets: Vec<Detection> = [(1, 0.91), (2, 0.97), (3, 0.91), (4, 0.62)]
        .iter()
        .map(|&(i, score)| Detection {
            class_code: "TONE1".into(),
            clip_id: format!("CLE-01_20230515_210000_part{i:03}"),
            source: source.into(),
            start: (i - 1) as f64 * 12.0,
            score,
            threshold_used: 0.5,
        })
        .collect();

    let out = dir.path().join("_outputs");
    let mut items = build_review_set(&dets, Some(3));
    for it in &mut items {
        let index = (it.start / 12.0) as usize;
        let clip = Clip {
            source: it.source.clone(),
            index,
            start: it.start,
            length: 12.0,
            pad: 0.0,
        };
        it.clip_audio_path = review_clip_path(it);
        extract_clip(&wav, &clip, &out.join(&it.clip_audio_path))?;
    }
    let manifest = out.join("review_manifest.csv");
    write_review_manifest(&items, &manifest)?;
    print!("{}", std::fs::read_to_string(manifest)?);
    Ok(())
}
